#pragma once

#include <functional>
#include <vector>

#include "mvsde/common.hpp"

namespace mvsde {

// Narrow read-only view of a law that coefficients consume. Carries the
// precomputed mean and second moment plus the atom block for user
// functionals, so coefficient evaluation stays O(1) given per-step stats.
struct LawProbe {
  int dim = 0;
  long count = 0;
  const double* mean = nullptr;       // dim entries
  double second_moment = 0.0;         // (1/N) sum |x_i|^2
  const double* atoms = nullptr;      // count × dim, row-major

  VecView mean_view() const { return {mean, std::size_t(dim)}; }
  VecView atom(long i) const { return {atoms + std::size_t(i) * dim, std::size_t(dim)}; }
  double expectation(const std::function<double(VecView)>& f) const {
    double s = 0.0;
    for (long i = 0; i < count; ++i) s += f(atom(i));
    return s / double(count);
  }
};

// Equal-weight atomic measure: N points in R^d, weight 1/N each.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(int dim, std::vector<double> atoms);
  static EmpiricalMeasure dirac(VecView point);

  int dim() const { return dim_; }
  long count() const { return long(atoms_.size() / dim_); }
  VecView atom(long i) const {
    return {atoms_.data() + std::size_t(i) * dim_, std::size_t(dim_)};
  }
  const std::vector<double>& raw() const { return atoms_; }

  std::vector<double> mean() const;
  double second_moment() const;

  // Probe view; `mean_storage` must outlive the probe.
  LawProbe probe(std::vector<double>& mean_storage) const;

 private:
  int dim_;
  std::vector<double> atoms_;
};

// Exact W2 for d = 1 via sorted pairing. Requires equal atom counts.
double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Exact W2 between equal-weight clouds via optimal assignment on squared
// distances (Kuhn–Munkres). Refuses N > 1024.
double w2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Synchronous-coupling upper bound sqrt(mean |X_i - Y_i|^2); always >= the
// assignment value on the same clouds.
double w2_coupled_bound(const EmpiricalMeasure& x, const EmpiricalMeasure& y);

double second_moment(const EmpiricalMeasure& mu);

}  // namespace mvsde
