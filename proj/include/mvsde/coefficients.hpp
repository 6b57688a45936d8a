#pragma once

#include <functional>
#include <vector>

#include "mvsde/common.hpp"
#include "mvsde/measure.hpp"

namespace mvsde {

using DriftFn =
    std::function<void(VecView x, const LawProbe& mu, MutVecView out)>;
// out is the d×d matrix, row-major.
using DiffusionFn =
    std::function<void(VecView x, const LawProbe& mu, MutVecView out)>;
using PerturbedDriftFn =
    std::function<void(double eps, VecView x, const LawProbe& mu, MutVecView out)>;
using PerturbedDiffusionFn =
    std::function<void(double eps, VecView x, const LawProbe& mu, MutVecView out)>;
using RhoFn = std::function<double(double eps)>;

// Drift b, diffusion sigma, optional perturbed family (b_eps, sigma_eps)
// with uniform-closeness bounds rho, plus growth/Lipschitz metadata and an
// optional drift Jacobian in x.
struct CoefficientSet {
  int dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  PerturbedDriftFn drift_eps;          // defaults to drift, rho_drift == 0
  PerturbedDiffusionFn diffusion_eps;  // defaults to diffusion
  RhoFn rho_drift;
  RhoFn rho_diffusion;
  double one_sided_lipschitz = 0.0;  // L
  double growth_exponent = 1.0;      // q
  DriftFn drift_jacobian;            // optional; d×d row-major
  double jacobian_lipschitz = 0.0;   // L'
  double jacobian_growth = 0.0;      // q'
  bool eps_family_attached = false;  // set when a perturbed family is supplied

  bool has_jacobian() const { return bool(drift_jacobian); }

  // Derives drift_eps/diffusion_eps from the base pair with rho == 0 unless
  // a perturbed family was attached. Safe to call repeatedly; the derived
  // wrappers follow the current base coefficients.
  void finalize();
};

// Named coefficient families.
DriftFn drift_zero(int dim);
// b(x, mu) = alpha*x + gamma
DriftFn drift_linear(int dim, double alpha, std::vector<double> gamma);
// b(x, mu) = alpha*x + beta*(x - mean(mu)) + gamma
DriftFn drift_mean_field_linear(int dim, double alpha, double beta,
                                std::vector<double> gamma);
DiffusionFn diffusion_constant(int dim, std::vector<double> matrix);
DiffusionFn diffusion_scalar(int dim, double value);
// sigma(x, mu) = diag(offset + slope * x_j)
DiffusionFn diffusion_state_linear(int dim, double offset, double slope);

// Analytic Jacobians of the named drifts.
DriftFn jacobian_constant(int dim, double diagonal);
DriftFn jacobian_of_linear(int dim, double alpha);
DriftFn jacobian_of_mean_field_linear(int dim, double alpha, double beta);

// rho families for the perturbed pair: rho(eps) = scale * eps^exponent.
RhoFn rho_zero();
RhoFn rho_power(double scale, double exponent);

// Wraps a base pair into a perturbed family shifted along `direction`:
// b_eps = b + rho_b(eps)*dir, sigma_eps = sigma + rho_sigma(eps)/sqrt(d)*I.
void attach_uniform_perturbation(CoefficientSet& c, RhoFn rho_b, RhoFn rho_sigma,
                                 std::vector<double> direction = {});

// Dirac probe helper for deterministic solvers: a view on a single point.
inline LawProbe dirac_probe(VecView point, double second_moment) {
  LawProbe p;
  p.dim = int(point.size());
  p.count = 1;
  p.mean = point.data();
  p.atoms = point.data();
  p.second_moment = second_moment;
  return p;
}

}  // namespace mvsde
