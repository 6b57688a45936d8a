#include "mvsde/coefficients.hpp"

#include <cmath>

namespace mvsde {

void CoefficientSet::finalize() {
  if (dim < 1) throw ConfigError("coefficients: dimension must be >= 1");
  if (!drift || !diffusion)
    throw ConfigError("coefficients: drift and diffusion are required");
  if (!rho_drift) rho_drift = rho_zero();
  if (!rho_diffusion) rho_diffusion = rho_zero();
  if (!eps_family_attached) {
    DriftFn base_b = drift;
    drift_eps = [base_b](double, VecView x, const LawProbe& mu, MutVecView out) {
      base_b(x, mu, out);
    };
    DiffusionFn base_s = diffusion;
    diffusion_eps = [base_s](double, VecView x, const LawProbe& mu,
                             MutVecView out) { base_s(x, mu, out); };
  }
}

DriftFn drift_zero(int dim) {
  return [dim](VecView, const LawProbe&, MutVecView out) {
    for (int j = 0; j < dim; ++j) out[j] = 0.0;
  };
}

DriftFn drift_linear(int dim, double alpha, std::vector<double> gamma) {
  if (gamma.empty()) gamma.assign(dim, 0.0);
  if (gamma.size() != std::size_t(dim))
    throw ConfigError("drift_linear: gamma dimension mismatch");
  return [dim, alpha, gamma](VecView x, const LawProbe&, MutVecView out) {
    for (int j = 0; j < dim; ++j) out[j] = alpha * x[j] + gamma[j];
  };
}

DriftFn drift_mean_field_linear(int dim, double alpha, double beta,
                                std::vector<double> gamma) {
  if (gamma.empty()) gamma.assign(dim, 0.0);
  if (gamma.size() != std::size_t(dim))
    throw ConfigError("drift_mean_field_linear: gamma dimension mismatch");
  return [dim, alpha, beta, gamma](VecView x, const LawProbe& mu, MutVecView out) {
    for (int j = 0; j < dim; ++j)
      out[j] = alpha * x[j] + beta * (x[j] - mu.mean[j]) + gamma[j];
  };
}

DiffusionFn diffusion_constant(int dim, std::vector<double> matrix) {
  if (matrix.size() != std::size_t(dim) * dim)
    throw ConfigError("diffusion_constant: matrix must be dim x dim");
  return [matrix](VecView, const LawProbe&, MutVecView out) {
    for (std::size_t i = 0; i < matrix.size(); ++i) out[i] = matrix[i];
  };
}

DiffusionFn diffusion_scalar(int dim, double value) {
  std::vector<double> m(std::size_t(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) m[std::size_t(i) * dim + i] = value;
  return diffusion_constant(dim, std::move(m));
}

DiffusionFn diffusion_state_linear(int dim, double offset, double slope) {
  return [dim, offset, slope](VecView x, const LawProbe&, MutVecView out) {
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        out[std::size_t(i) * dim + j] = (i == j) ? offset + slope * x[i] : 0.0;
  };
}

DriftFn jacobian_constant(int dim, double diagonal) {
  return [dim, diagonal](VecView, const LawProbe&, MutVecView out) {
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        out[std::size_t(i) * dim + j] = (i == j) ? diagonal : 0.0;
  };
}

DriftFn jacobian_of_linear(int dim, double alpha) {
  return jacobian_constant(dim, alpha);
}

DriftFn jacobian_of_mean_field_linear(int dim, double alpha, double beta) {
  // d/dx of alpha*x + beta*(x - mean) at frozen law
  return jacobian_constant(dim, alpha + beta);
}

RhoFn rho_zero() {
  return [](double) { return 0.0; };
}

RhoFn rho_power(double scale, double exponent) {
  if (scale < 0.0) throw ConfigError("rho_power: scale must be nonnegative");
  return [scale, exponent](double eps) { return scale * std::pow(eps, exponent); };
}

void attach_uniform_perturbation(CoefficientSet& c, RhoFn rho_b, RhoFn rho_sigma,
                                 std::vector<double> direction) {
  c.finalize();
  const int dim = c.dim;
  if (direction.empty()) {
    direction.assign(dim, 0.0);
    direction[0] = 1.0;
  }
  const double dn = norm(direction);
  if (dn == 0.0) throw ConfigError("perturbation: zero direction");
  for (auto& v : direction) v /= dn;

  DriftFn base_b = c.drift;
  DiffusionFn base_s = c.diffusion;
  RhoFn rb = rho_b ? rho_b : rho_zero();
  RhoFn rs = rho_sigma ? rho_sigma : rho_zero();
  c.rho_drift = rb;
  c.rho_diffusion = rs;
  c.eps_family_attached = true;
  c.drift_eps = [base_b, rb, direction, dim](double eps, VecView x,
                                             const LawProbe& mu, MutVecView out) {
    base_b(x, mu, out);
    const double r = rb(eps);
    if (r != 0.0)
      for (int j = 0; j < dim; ++j) out[j] += r * direction[j];
  };
  const double inv_sqrt_d = 1.0 / std::sqrt(double(dim));
  c.diffusion_eps = [base_s, rs, dim, inv_sqrt_d](double eps, VecView x,
                                                  const LawProbe& mu,
                                                  MutVecView out) {
    base_s(x, mu, out);
    const double r = rs(eps);
    if (r != 0.0)
      for (int i = 0; i < dim; ++i)
        out[std::size_t(i) * dim + i] += r * inv_sqrt_d;
  };
}

}  // namespace mvsde
