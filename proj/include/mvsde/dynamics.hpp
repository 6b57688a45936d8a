#pragma once

#include <cstdint>
#include <vector>

#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/control.hpp"
#include "mvsde/grid.hpp"
#include "mvsde/monotone.hpp"
#include "mvsde/noise.hpp"

namespace mvsde {

// Complete description of one system: operator, coefficients, start point,
// grid, ensemble sizes and the noise seed.
struct Scenario {
  MonotoneOperator op = MonotoneOperator::zero(1);
  CoefficientSet coeffs;
  std::vector<double> start;
  TimeGrid grid;
  int particles = 1000;
  long replicas = 1;
  std::uint64_t seed = 0;
  double resolvent_tol = 1e-12;

  // Checks dimensional consistency and the start point (must lie in the
  // closure of the operator domain within 1e-9; it is then snapped onto the
  // domain so produced states are members exactly).
  void validate();
};

struct ParticleEnsemble {
  std::vector<SamplePath> states;
  std::vector<FiniteVariationPath> reflections;
};

struct CoupledEnsemble {
  ParticleEnsemble ensemble;
  PathPair limit;
};

struct MdpEnsemble {
  std::vector<SamplePath> fluctuations;       // (X - X0) / lambda
  std::vector<FiniteVariationPath> reflections;  // (K - K0) / lambda
  PathPair limit;
};

// Noise-free limit system: splitting step p = x + b(x, delta_x) dt followed
// by the resolvent; the correction increment is p minus the new state.
PathPair solve_limit(const Scenario& sc);

// One replica of the N-particle system at noise level eps in [0, 1]. The law
// argument of the coefficients is the empirical measure of the N current
// states, frozen within each step.
ParticleEnsemble simulate_particles(const Scenario& sc, double eps,
                                    std::uint32_t replica = 0);

// Stochastic ensemble plus the deterministic limit on the same grid, for
// sup-distance statistics under synchronous coupling.
CoupledEnsemble simulate_coupled_limit(const Scenario& sc, double eps,
                                       std::uint32_t replica = 0);

// Centered-rescaled fluctuation ensemble (X - X0)/lambda. Requires
// lambda in [1e-12, 1] and eps/lambda^2 <= 1.
MdpEnsemble mdp_process(const Scenario& sc, double eps, double lambda,
                        std::uint32_t replica = 0);

}  // namespace mvsde
