#pragma once

#include "mvsde/control.hpp"
#include "mvsde/dynamics.hpp"

namespace mvsde {

// Controlled deterministic path: same splitting as solve_limit with drift
// b(Y, delta_{X0_t}) + sigma(Y, delta_{X0_t}) * u_t. With u == 0 this runs
// the identical code path as solve_limit.
PathPair solve_skeleton(const Scenario& sc, const ControlPath& u);

struct ControlledEnsemble {
  ParticleEnsemble controlled;  // Z paths
  ParticleEnsemble driven;      // the uncontrolled system supplying the law
  PathPair limit;
};

// Controlled perturbed process: the uncontrolled ensemble supplies both the
// per-step empirical law and the Brownian increments (shared noise); the
// controlled copy adds sigma_eps * u dt.
ControlledEnsemble solve_controlled_perturbed(const Scenario& sc, double eps,
                                              const ControlPath& u,
                                              std::uint32_t replica = 0);

// Linearized fluctuation skeleton: d nu = b'(X0, delta_{X0}) nu dt
// + sigma(X0, delta_{X0}) psi dt - dK, nu(0) = 0, integrated with the same
// splitting (the operator constrains nu directly).
PathPair solve_mdp_skeleton(const Scenario& sc, const ControlPath& psi,
                            const JacobianField& jac);

struct MdpControlled {
  std::vector<SamplePath> fluctuations;
  std::vector<FiniteVariationPath> reflections;  // (K_Z - K0) / lambda
  ControlledEnsemble raw;
};

// Controlled fluctuation process at scale lambda: the controlled copy runs
// with control lambda * psi and the fluctuation is (Z - X0)/lambda, with the
// correction taken as the scaled difference of the two reflected systems.
MdpControlled solve_mdp_controlled(const Scenario& sc, double eps, double lambda,
                                   const ControlPath& psi,
                                   std::uint32_t replica = 0);

enum class ProbeMode { oscillatory, lowpass };

// Continuity probe of the control-to-path map. Oscillatory mode perturbs u
// by sin(2*pi*n*t/T) along the first axis (weakly but not strongly null);
// lowpass mode keeps the first n Fourier modes of u. Returns
// sup_t |Y^{u_n} - Y^u|.
double weak_convergence_probe(const Scenario& sc, const ControlPath& u,
                              ProbeMode mode, int n);

}  // namespace mvsde
