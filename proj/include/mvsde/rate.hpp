#pragma once

#include <functional>
#include <optional>

#include "mvsde/control.hpp"
#include "mvsde/dynamics.hpp"
#include "mvsde/skeleton.hpp"

namespace mvsde {

enum class RateRegime { ldp, mdp };

struct RateTarget {
  enum class Kind { path, terminal_halfspace, terminal_ball, tube };
  Kind kind = Kind::path;
  SamplePath path;              // path and tube center
  std::vector<double> normal;   // terminal_halfspace: <n, x_T> >= offset
  double offset = 0.0;
  std::vector<double> center;   // terminal_ball
  double radius = 0.0;          // ball and tube radius

  static RateTarget for_path(SamplePath g);
  static RateTarget terminal_halfspace(std::vector<double> normal, double offset);
  static RateTarget terminal_ball(std::vector<double> center, double radius);
  static RateTarget tube(SamplePath center, double radius);
};

struct RateQuery {
  RateTarget target;
  RateRegime regime = RateRegime::ldp;
};

struct RateResult {
  double value = 0.0;           // equals control.energy() exactly
  ControlPath control;
  SamplePath trajectory;        // achieved controlled path
  int iterations = 0;
  double constraint_residual = 0.0;
  bool converged = true;        // residual below tolerance
  bool certified = false;       // true only for closed-form inversion
};

struct RateOptions {
  double interior_margin = 1e-8;  // minimal domain margin for closed forms
  double condition_cap = 1e8;     // diffusion condition-number cap
  double start_tol = 1e-9;        // |g(0) - h| tolerance
  int coarse_cells = 32;          // optimizer control parameterization
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  int max_outer = 8;
  int max_inner = 300;
  double residual_tol = 1e-4;
  int restarts = 2;
  std::uint64_t seed = 1234;
};

double control_energy(const ControlPath& u);

// Closed-form inversion u = sigma(g, delta_{X0})^{-1} (g' - b(g, delta_{X0}))
// on interior paths; throws BoundaryContactError on boundary contact and
// NumericalError on singular or ill-conditioned diffusion.
RateResult rate_of_path(const Scenario& sc, const SamplePath& g,
                        const RateOptions& opt = {});

// Linearized-regime inversion psi = sigma(X0)^{-1} (g' - b'(X0) g), g(0) = 0.
RateResult mdp_rate_of_path(const Scenario& sc, const SamplePath& g,
                            const JacobianField& jac,
                            const RateOptions& opt = {});

// Penalty minimization of the control energy over the target set. Values are
// upper bounds on the infimum; `converged` records whether the constraint
// residual reached tolerance.
RateResult rate_optimize(const Scenario& sc, const RateQuery& query,
                         const RateOptions& opt = {});

// Closed form when the target is an interior path, optimizer otherwise.
RateResult evaluate_rate(const Scenario& sc, const RateQuery& query,
                         const RateOptions& opt = {});

// min over controls of f(Y^u) + energy(u); the comparison value of the
// Laplace-principle check.
RateResult minimize_path_functional(
    const Scenario& sc, const std::function<double(const SamplePath&)>& f,
    const RateOptions& opt = {});

}  // namespace mvsde
