#include "mvsde/common.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace mvsde {

bool all_finite(VecView a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

bool lu_factor(std::vector<double>& a, int n, std::vector<int>& piv) {
  piv.resize(n);
  for (int i = 0; i < n; ++i) piv[i] = i;
  for (int k = 0; k < n; ++k) {
    int p = k;
    double best = std::fabs(a[std::size_t(k) * n + k]);
    for (int i = k + 1; i < n; ++i) {
      const double v = std::fabs(a[std::size_t(i) * n + k]);
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (best == 0.0) return false;
    if (p != k) {
      for (int j = 0; j < n; ++j)
        std::swap(a[std::size_t(p) * n + j], a[std::size_t(k) * n + j]);
      std::swap(piv[p], piv[k]);
    }
    const double pivval = a[std::size_t(k) * n + k];
    for (int i = k + 1; i < n; ++i) {
      const double f = a[std::size_t(i) * n + k] / pivval;
      a[std::size_t(i) * n + k] = f;
      for (int j = k + 1; j < n; ++j)
        a[std::size_t(i) * n + j] -= f * a[std::size_t(k) * n + j];
    }
  }
  return true;
}

void lu_solve(const std::vector<double>& lu, const std::vector<int>& piv, int n,
              MutVecView b) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = b[piv[i]];
  for (int i = 1; i < n; ++i) {
    double s = x[i];
    for (int j = 0; j < i; ++j) s -= lu[std::size_t(i) * n + j] * x[j];
    x[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int j = i + 1; j < n; ++j) s -= lu[std::size_t(i) * n + j] * x[j];
    x[i] = s / lu[std::size_t(i) * n + i];
  }
  for (int i = 0; i < n; ++i) b[i] = x[i];
}

static double one_norm(const std::vector<double>& a, int n) {
  double best = 0.0;
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::fabs(a[std::size_t(i) * n + j]);
    best = std::max(best, s);
  }
  return best;
}

double condition_number_1(const std::vector<double>& a, int n) {
  std::vector<double> lu = a;
  std::vector<int> piv;
  if (!lu_factor(lu, n, piv)) return std::numeric_limits<double>::infinity();
  std::vector<double> inv(std::size_t(n) * n, 0.0);
  std::vector<double> col(n);
  for (int j = 0; j < n; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = 1.0;
    lu_solve(lu, piv, n, col);
    for (int i = 0; i < n; ++i) inv[std::size_t(i) * n + j] = col[i];
  }
  return one_norm(a, n) * one_norm(inv, n);
}

double min_symmetric_eigenvalue(std::vector<double> s, int n) {
  if (n == 1) return s[0];
  auto at = [&](int i, int j) -> double& { return s[std::size_t(i) * n + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - sn * akq;
          at(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - sn * aqk;
          at(q, k) = sn * apk + c * aqk;
        }
      }
    }
  }
  double mn = s[0];
  for (int i = 1; i < n; ++i) mn = std::min(mn, at(i, i));
  return mn;
}

double frobenius_norm(VecView m) {
  double s = 0.0;
  for (double v : m) s += v * v;
  return std::sqrt(s);
}

double pairwise_sum(VecView values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values.subspan(0, half)) + pairwise_sum(values.subspan(half));
}

LinearFit weighted_least_squares(VecView x, VecView y, VecView w) {
  LinearFit fit;
  const std::size_t n = x.size();
  if (n < 2) return fit;
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    swx += w[i] * x[i];
    swy += w[i] * y[i];
    swxx += w[i] * x[i] * x[i];
    swxy += w[i] * x[i] * y[i];
  }
  const double det = sw * swxx - swx * swx;
  if (det == 0.0 || !std::isfinite(det)) return fit;
  fit.intercept = (swxx * swy - swx * swxy) / det;
  fit.slope = (sw * swxy - swx * swy) / det;
  fit.points = int(n);
  fit.valid = true;
  return fit;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace mvsde
