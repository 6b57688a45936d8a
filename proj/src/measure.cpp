#include "mvsde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvsde {

EmpiricalMeasure::EmpiricalMeasure(int dim, std::vector<double> atoms)
    : dim_(dim), atoms_(std::move(atoms)) {
  if (dim < 1) throw ConfigError("measure: dimension must be >= 1");
  if (atoms_.empty() || atoms_.size() % dim != 0)
    throw ConfigError("measure: atom block must be a nonempty multiple of dim");
}

EmpiricalMeasure EmpiricalMeasure::dirac(VecView point) {
  return EmpiricalMeasure(int(point.size()),
                          std::vector<double>(point.begin(), point.end()));
}

std::vector<double> EmpiricalMeasure::mean() const {
  std::vector<double> m(dim_, 0.0);
  const long n = count();
  for (long i = 0; i < n; ++i) {
    const auto a = atom(i);
    for (int j = 0; j < dim_; ++j) m[j] += a[j];
  }
  for (auto& v : m) v /= double(n);
  return m;
}

double EmpiricalMeasure::second_moment() const {
  double s = 0.0;
  for (double v : atoms_) s += v * v;
  return s / double(count());
}

LawProbe EmpiricalMeasure::probe(std::vector<double>& mean_storage) const {
  mean_storage = mean();
  LawProbe p;
  p.dim = dim_;
  p.count = count();
  p.mean = mean_storage.data();
  p.second_moment = second_moment();
  p.atoms = atoms_.data();
  return p;
}

double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != 1 || nu.dim() != 1)
    throw ConfigError("w2_1d: only one-dimensional measures are supported");
  if (mu.count() != nu.count())
    throw ConfigError("w2_1d: atom counts must be equal");
  std::vector<double> a = mu.raw(), b = nu.raw();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / double(a.size()));
}

namespace {

// Kuhn–Munkres with row/column potentials, O(n^3).
double assignment_cost(const std::vector<double>& cost, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[std::size_t(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j)
    if (p[j]) total += cost[std::size_t(p[j] - 1) * n + (j - 1)];
  return total;
}

}  // namespace

double w2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) throw ConfigError("w2_assignment: dimension mismatch");
  if (mu.count() != nu.count())
    throw ConfigError("w2_assignment: atom counts must be equal");
  const long n = mu.count();
  if (n > 1024)
    throw ConfigError(
        "w2_assignment: atom count exceeds 1024; use w2_coupled_bound for "
        "large coupled ensembles");
  std::vector<double> cost(std::size_t(n) * n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      cost[std::size_t(i) * n + j] = dist_sq(mu.atom(i), nu.atom(j));
  return std::sqrt(assignment_cost(cost, int(n)) / double(n));
}

double w2_coupled_bound(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  if (x.dim() != y.dim() || x.count() != y.count())
    throw ConfigError("w2_coupled_bound: clouds must be paired");
  double s = 0.0;
  for (long i = 0; i < x.count(); ++i) s += dist_sq(x.atom(i), y.atom(i));
  return std::sqrt(s / double(x.count()));
}

double second_moment(const EmpiricalMeasure& mu) { return mu.second_moment(); }

}  // namespace mvsde
