#include "mvsde/skeleton.hpp"

#include <cmath>

#include "engine.hpp"

namespace mvsde {

namespace {
void check_control(const Scenario& sc, const ControlPath& u) {
  if (!(u.grid() == sc.grid) || u.dim() != sc.coeffs.dim)
    throw ConfigError("control path does not match the scenario grid");
  if (!all_finite(u.raw()))
    throw ConfigError("control path must have finite energy");
}
}  // namespace

PathPair solve_skeleton(const Scenario& sc, const ControlPath& u) {
  check_control(sc, u);
  const PathPair limit = solve_limit(sc);
  const auto& coeffs = sc.coeffs;
  const SamplePath& x0 = limit.state;
  engine::StepField drift = [&coeffs, &x0](int step, VecView y, MutVecView out) {
    const auto c = x0.value(step);
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    coeffs.drift(y, mu, out);
  };
  engine::StepField diffusion = [&coeffs, &x0](int step, VecView y, MutVecView out) {
    const auto c = x0.value(step);
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    coeffs.diffusion(y, mu, out);
  };
  return engine::integrate_splitting(sc.op, sc.grid, sc.start, drift, diffusion,
                                     &u, sc.resolvent_tol);
}

ControlledEnsemble solve_controlled_perturbed(const Scenario& sc, double eps,
                                              const ControlPath& u,
                                              std::uint32_t replica) {
  check_control(sc, u);
  if (!(eps >= 0.0 && eps <= 1.0))
    throw ConfigError("noise level eps must lie in [0, 1]");
  engine::ReplicaRequest rq;
  rq.eps = eps;
  rq.control = &u;
  rq.controlled_copy = true;
  rq.throw_on_nonfinite = true;
  engine::FullResult full = engine::run_full(sc, rq, replica);
  ControlledEnsemble out;
  out.controlled = std::move(full.main);
  out.driven = std::move(full.base);
  out.limit = solve_limit(sc);
  return out;
}

PathPair solve_mdp_skeleton(const Scenario& sc, const ControlPath& psi,
                            const JacobianField& jac) {
  check_control(sc, psi);
  const PathPair limit = solve_limit(sc);
  const SamplePath& x0 = limit.state;
  const auto& coeffs = sc.coeffs;
  const int d = sc.coeffs.dim;

  // The linear dynamics start from the origin, not from the scenario start.
  std::vector<double> origin(d, 0.0);
  if (sc.op.constrained() && !sc.op.domain().contains(origin, 1e-9))
    throw ConfigError(
        "mdp skeleton: the origin must lie in the operator domain closure");

  std::vector<double> jac_buf(std::size_t(d) * d);
  engine::StepField drift = [&](int step, VecView y, MutVecView out) {
    const auto c = x0.value(step);
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    jac.eval(c, mu, jac_buf);
    matvec(jac_buf, d, y, out);
  };
  engine::StepField diffusion = [&coeffs, &x0](int step, VecView, MutVecView out) {
    const auto c = x0.value(step);
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    coeffs.diffusion(c, mu, out);
  };
  return engine::integrate_splitting(sc.op, sc.grid, origin, drift, diffusion,
                                     &psi, sc.resolvent_tol);
}

MdpControlled solve_mdp_controlled(const Scenario& sc, double eps, double lambda,
                                   const ControlPath& psi,
                                   std::uint32_t replica) {
  check_control(sc, psi);
  if (!(lambda >= 1e-12 && lambda <= 1.0))
    throw ConfigError("mdp: lambda must lie in [1e-12, 1]");
  if (eps / (lambda * lambda) > 1.0 + 1e-12)
    throw ConfigError("mdp: speed condition eps/lambda^2 <= 1 violated");

  engine::ReplicaRequest rq;
  rq.eps = eps;
  rq.control = &psi;
  rq.control_scale = lambda;
  rq.controlled_copy = true;
  rq.throw_on_nonfinite = true;
  engine::FullResult full = engine::run_full(sc, rq, replica);

  MdpControlled out;
  out.raw.controlled = std::move(full.main);
  out.raw.driven = std::move(full.base);
  out.raw.limit = solve_limit(sc);

  const int d = sc.coeffs.dim;
  const double inv = 1.0 / lambda;
  const SamplePath& x0 = out.raw.limit.state;
  const FiniteVariationPath& k0 = out.raw.limit.reflection;
  for (std::size_t pidx = 0; pidx < out.raw.controlled.states.size(); ++pidx) {
    const SamplePath& z = out.raw.controlled.states[pidx];
    SamplePath m(sc.grid, d);
    for (int i = 0; i < sc.grid.nodes(); ++i) {
      const auto zv = z.value(i);
      const auto lv = x0.value(i);
      auto mv = m.value(i);
      for (int k = 0; k < d; ++k) mv[k] = (zv[k] - lv[k]) * inv;
    }
    const FiniteVariationPath& kz = out.raw.controlled.reflections[pidx];
    FiniteVariationPath km(sc.grid, d);
    for (int i = 0; i < sc.grid.steps; ++i) {
      const auto ki = kz.increment(i);
      const auto kl = k0.increment(i);
      auto ko = km.increment(i);
      for (int k = 0; k < d; ++k) ko[k] = (ki[k] - kl[k]) * inv;
    }
    out.fluctuations.push_back(std::move(m));
    out.reflections.push_back(std::move(km));
  }
  return out;
}

namespace {

ControlPath lowpass_filter(const ControlPath& u, int modes) {
  const TimeGrid& grid = u.grid();
  const int M = grid.steps;
  const int d = u.dim();
  constexpr double two_pi = 6.283185307179586476925286766559;
  ControlPath out(grid, d);
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i = 0; i < M; ++i) mean += u.at(i, j);
    mean /= double(M);
    for (int i = 0; i < M; ++i) out.at(i, j) = mean;
    const int kmax = std::min(modes, M / 2);
    for (int k = 1; k <= kmax; ++k) {
      double a = 0.0, b = 0.0;
      for (int i = 0; i < M; ++i) {
        const double ang = two_pi * k * i / double(M);
        a += u.at(i, j) * std::cos(ang);
        b += u.at(i, j) * std::sin(ang);
      }
      a *= 2.0 / double(M);
      b *= 2.0 / double(M);
      for (int i = 0; i < M; ++i) {
        const double ang = two_pi * k * i / double(M);
        out.at(i, j) += a * std::cos(ang) + b * std::sin(ang);
      }
    }
  }
  return out;
}

}  // namespace

double weak_convergence_probe(const Scenario& sc, const ControlPath& u,
                              ProbeMode mode, int n) {
  check_control(sc, u);
  if (n < 0) throw ConfigError("probe index must be nonnegative");
  ControlPath un = u;
  if (mode == ProbeMode::oscillatory) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (int i = 0; i < sc.grid.steps; ++i)
      un.at(i, 0) += std::sin(two_pi * n * sc.grid.time(i) / sc.grid.horizon);
  } else {
    un = lowpass_filter(u, n);
  }
  const PathPair base = solve_skeleton(sc, u);
  const PathPair osc = solve_skeleton(sc, un);
  return base.state.sup_distance(osc.state);
}

}  // namespace mvsde
