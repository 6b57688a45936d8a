#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvsde {

using VecView = std::span<const double>;
using MutVecView = std::span<double>;

// Invalid construction arguments, config mistakes, contract misuse.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative procedure failed to reach its tolerance; carries the residual.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_ = 0.0;
};

// A path touches the constraint boundary where a closed-form rate inversion
// is ill-posed; callers should fall back to the optimizer.
class BoundaryContactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double dot(VecView a, VecView b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(VecView a) { return dot(a, a); }
inline double norm(VecView a) { return std::sqrt(norm_sq(a)); }

inline double dist_sq(VecView a, VecView b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// out = m * x, m row-major n×n
inline void matvec(VecView m, int n, VecView x, MutVecView out) {
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = m.data() + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

// out += scale * (m * x)
inline void matvec_add(VecView m, int n, VecView x, double scale, MutVecView out) {
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = m.data() + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) s += row[j] * x[j];
    out[i] += scale * s;
  }
}

bool all_finite(VecView a);

// In-place LU factorization with partial pivoting; returns false on
// (numerical) singularity.
bool lu_factor(std::vector<double>& a, int n, std::vector<int>& piv);
void lu_solve(const std::vector<double>& lu, const std::vector<int>& piv, int n,
              MutVecView b);

// 1-norm condition estimate of an n×n matrix (exact inverse via LU).
// Returns +inf when singular.
double condition_number_1(const std::vector<double>& a, int n);

// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
double min_symmetric_eigenvalue(std::vector<double> s, int n);

// Frobenius norm of a row-major n×n matrix.
double frobenius_norm(VecView m);

// Pairwise (tree) summation in fixed index order; bit-stable regardless of
// how the values were produced.
double pairwise_sum(VecView values);

// Weighted least squares fit y ≈ intercept + slope * x.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  int points = 0;
  bool valid = false;
};
LinearFit weighted_least_squares(VecView x, VecView y, VecView w);

// FNV-1a 64-bit over a byte string, hex-encoded. Used for config digests.
std::string fnv1a_hex(const std::string& bytes);

// Fixed, locale-independent formatting used by every emitted artifact.
std::string format_double(double v);

}  // namespace mvsde
