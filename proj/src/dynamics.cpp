#include "mvsde/dynamics.hpp"

#include <cmath>

#include "engine.hpp"

namespace mvsde {

void Scenario::validate() {
  coeffs.finalize();
  if (op.dim() != coeffs.dim)
    throw ConfigError("scenario: operator and coefficient dimensions differ");
  if (start.size() != std::size_t(coeffs.dim))
    throw ConfigError("scenario: start point dimension mismatch");
  if (!all_finite(start)) throw ConfigError("scenario: start point must be finite");
  if (particles < 1) throw ConfigError("scenario: particles must be >= 1");
  if (replicas < 1) throw ConfigError("scenario: replicas must be >= 1");
  if (op.constrained()) {
    if (!op.domain().contains(start, 1e-9))
      throw ConfigError(
          "scenario: start point (h) lies outside the closure of the operator "
          "domain");
    start = op.domain().project(start);
  }
}

PathPair solve_limit(const Scenario& sc) {
  const auto& coeffs = sc.coeffs;
  engine::StepField drift = [&coeffs](int, VecView y, MutVecView out) {
    const LawProbe mu = dirac_probe(y, norm_sq(y));
    coeffs.drift(y, mu, out);
  };
  return engine::integrate_splitting(sc.op, sc.grid, sc.start, drift, nullptr,
                                     nullptr, sc.resolvent_tol);
}

namespace {
void check_eps(double eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw ConfigError("noise level eps must lie in [0, 1]");
}
}  // namespace

ParticleEnsemble simulate_particles(const Scenario& sc, double eps,
                                    std::uint32_t replica) {
  check_eps(eps);
  engine::ReplicaRequest rq;
  rq.eps = eps;
  rq.throw_on_nonfinite = true;
  return engine::run_full(sc, rq, replica).main;
}

CoupledEnsemble simulate_coupled_limit(const Scenario& sc, double eps,
                                       std::uint32_t replica) {
  check_eps(eps);
  CoupledEnsemble out;
  out.limit = solve_limit(sc);
  engine::ReplicaRequest rq;
  rq.eps = eps;
  rq.throw_on_nonfinite = true;
  out.ensemble = engine::run_full(sc, rq, replica).main;
  return out;
}

MdpEnsemble mdp_process(const Scenario& sc, double eps, double lambda,
                        std::uint32_t replica) {
  check_eps(eps);
  if (!(lambda >= 1e-12 && lambda <= 1.0))
    throw ConfigError("mdp: lambda must lie in [1e-12, 1]");
  if (eps / (lambda * lambda) > 1.0 + 1e-12)
    throw ConfigError("mdp: speed condition eps/lambda^2 <= 1 violated");

  CoupledEnsemble coupled = simulate_coupled_limit(sc, eps, replica);
  MdpEnsemble out;
  out.limit = std::move(coupled.limit);
  const int d = sc.coeffs.dim;
  const double inv = 1.0 / lambda;
  out.fluctuations.reserve(coupled.ensemble.states.size());
  out.reflections.reserve(coupled.ensemble.states.size());
  for (std::size_t pidx = 0; pidx < coupled.ensemble.states.size(); ++pidx) {
    const SamplePath& x = coupled.ensemble.states[pidx];
    SamplePath m(sc.grid, d);
    for (int i = 0; i < sc.grid.nodes(); ++i) {
      const auto xv = x.value(i);
      const auto lv = out.limit.state.value(i);
      auto mv = m.value(i);
      for (int k = 0; k < d; ++k) mv[k] = (xv[k] - lv[k]) * inv;
    }
    const FiniteVariationPath& kx = coupled.ensemble.reflections[pidx];
    FiniteVariationPath km(sc.grid, d);
    for (int i = 0; i < sc.grid.steps; ++i) {
      const auto ki = kx.increment(i);
      const auto k0 = out.limit.reflection.increment(i);
      auto ko = km.increment(i);
      for (int k = 0; k < d; ++k) ko[k] = (ki[k] - k0[k]) * inv;
    }
    out.fluctuations.push_back(std::move(m));
    out.reflections.push_back(std::move(km));
  }
  return out;
}

}  // namespace mvsde
