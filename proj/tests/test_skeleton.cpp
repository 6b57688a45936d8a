#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mvsde/skeleton.hpp"

using namespace mvsde;

namespace {

MonotoneOperator half_line_op() {
  return MonotoneOperator::indicator(ConvexDomain::half_space({-1.0}, 0.0));
}

Scenario make_scenario(MonotoneOperator op, DriftFn b, DiffusionFn s,
                       std::vector<double> h, int steps = 1000, double T = 1.0) {
  Scenario sc;
  const int dim = op.dim();
  sc.op = std::move(op);
  sc.coeffs.dim = dim;
  sc.coeffs.drift = std::move(b);
  sc.coeffs.diffusion = std::move(s);
  sc.start = std::move(h);
  sc.grid = TimeGrid(T, steps);
  sc.particles = 1;
  sc.replicas = 1;
  sc.seed = 4242;
  sc.validate();
  return sc;
}

}  // namespace

TEST_CASE("solve_skeleton: zero control reproduces solve_limit bit-exactly") {
  Scenario sc = make_scenario(half_line_op(),
                              drift_mean_field_linear(1, -1.0, -0.5, {0.0}),
                              diffusion_state_linear(1, 1.0, 0.25), {0.5});
  PathPair limit = solve_limit(sc);
  PathPair skel = solve_skeleton(sc, ControlPath(sc.grid, 1));
  for (int i = 0; i <= sc.grid.steps; ++i) {
    CHECK(skel.state.at(i, 0) == limit.state.at(i, 0));
    if (i < sc.grid.steps)
      CHECK(skel.reflection.increment(i)[0] == limit.reflection.increment(i)[0]);
  }
}

TEST_CASE("solve_skeleton: pure integration of a unit control") {
  Scenario sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                              diffusion_scalar(1, 1.0), {0.0});
  PathPair sol = solve_skeleton(sc, ControlPath::constant(sc.grid, {1.0}));
  for (int i = 0; i <= sc.grid.steps; ++i)
    CHECK(sol.state.at(i, 0) == doctest::Approx(sc.grid.time(i)).epsilon(1e-12));
}

TEST_CASE("solve_skeleton: boundary ride under an inward control") {
  Scenario sc = make_scenario(half_line_op(), drift_zero(1),
                              diffusion_scalar(1, 1.0), {0.0});
  PathPair sol = solve_skeleton(sc, ControlPath::constant(sc.grid, {-1.0}));
  for (int i = 0; i <= sc.grid.steps; ++i) CHECK(sol.state.at(i, 0) == 0.0);
  CHECK(std::fabs(sol.reflection.total_variation() - 1.0) <= 1e-12);
}

TEST_CASE("solve_controlled_perturbed: zero control equals the plain ensemble") {
  Scenario sc = make_scenario(half_line_op(),
                              drift_mean_field_linear(1, -1.0, -0.5, {0.0}),
                              diffusion_scalar(1, 1.0), {0.5}, 400);
  sc.particles = 8;
  ControlledEnsemble ce =
      solve_controlled_perturbed(sc, 0.25, ControlPath(sc.grid, 1), 3);
  ParticleEnsemble plain = simulate_particles(sc, 0.25, 3);
  for (int j = 0; j < sc.particles; ++j)
    for (int i = 0; i <= sc.grid.steps; ++i)
      CHECK(ce.controlled.states[j].at(i, 0) == plain.states[j].at(i, 0));
}

TEST_CASE("solve_controlled_perturbed: additive closed form") {
  // A = 0, b = 0, sigma = 1: Z_t = sqrt(eps) W_t + int u exactly
  Scenario sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                              diffusion_scalar(1, 1.0), {0.0}, 500);
  sc.particles = 2;
  const double eps = 0.09;
  ControlPath u = ControlPath::ramp(sc.grid, {0.5}, {-0.5});
  ControlledEnsemble ce = solve_controlled_perturbed(sc, eps, u, 7);

  GaussianStream stream(sc.seed);
  const double dt = sc.grid.dt();
  const double noise_scale = std::sqrt(eps) * std::sqrt(dt);
  for (int j = 0; j < sc.particles; ++j) {
    double w = 0.0, integral = 0.0;
    for (int i = 0; i < sc.grid.steps; ++i) {
      std::vector<double> xi(1);
      stream.fill(7, std::uint32_t(j), std::uint32_t(i), xi);
      w += noise_scale * xi[0];
      integral += dt * u.at(i, 0);
      CHECK(std::fabs(ce.controlled.states[j].at(i + 1, 0) - (w + integral)) <=
            1e-12);
    }
  }
}

TEST_CASE("solve_controlled_perturbed: converges to the skeleton as eps shrinks") {
  Scenario sc = make_scenario(half_line_op(),
                              drift_mean_field_linear(1, -1.0, -0.5, {0.0}),
                              diffusion_scalar(1, 1.0), {0.5}, 400);
  sc.particles = 64;
  ControlPath u = ControlPath::constant(sc.grid, {0.4});
  PathPair skel = solve_skeleton(sc, u);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.16, 0.04, 0.01, 0.0025}) {
    ControlledEnsemble ce = solve_controlled_perturbed(sc, eps, u, 11);
    double ms = 0.0;
    for (const auto& z : ce.controlled.states) {
      const double d = z.sup_distance(skel.state);
      ms += d * d;
    }
    ms /= sc.particles;
    CHECK(ms < prev);
    prev = ms;
  }
  CHECK(prev < 0.01);
}

TEST_CASE("solve_mdp_skeleton: frozen closed forms") {
  Scenario sc = make_scenario(MonotoneOperator::zero(1),
                              drift_linear(1, -1.0, {0.0}),
                              diffusion_scalar(1, 1.0), {0.3}, 10000);
  sc.coeffs.drift_jacobian = jacobian_of_linear(1, -1.0);
  const JacobianField jac = JacobianField::from_coefficients(sc.coeffs);

  SUBCASE("zero control gives the zero path") {
    PathPair nu = solve_mdp_skeleton(sc, ControlPath(sc.grid, 1), jac);
    for (int i = 0; i <= sc.grid.steps; ++i) CHECK(nu.state.at(i, 0) == 0.0);
  }

  SUBCASE("b' = -1, sigma = 1, psi = 1: nu(1) = 1 - exp(-1)") {
    PathPair nu = solve_mdp_skeleton(sc, ControlPath::constant(sc.grid, {1.0}), jac);
    CHECK(std::fabs(nu.state.at(sc.grid.steps, 0) - (1.0 - std::exp(-1.0))) < 1e-4);
  }

  SUBCASE("variation of constants for general coefficients") {
    const double beta = 0.7, s = 1.3;
    Scenario sc2 = make_scenario(MonotoneOperator::zero(1),
                                 drift_linear(1, beta, {0.0}),
                                 diffusion_scalar(1, s), {0.3}, 10000);
    sc2.coeffs.drift_jacobian = jacobian_of_linear(1, beta);
    const JacobianField jac2 = JacobianField::from_coefficients(sc2.coeffs);
    PathPair nu = solve_mdp_skeleton(sc2, ControlPath::constant(sc2.grid, {1.0}), jac2);
    for (int i : {2500, 5000, 10000}) {
      const double t = sc2.grid.time(i);
      const double expected = s * (std::exp(beta * t) - 1.0) / beta;
      CHECK(std::fabs(nu.state.at(i, 0) - expected) < 5e-4);
    }
  }
}

TEST_CASE("solve_mdp_skeleton: linearity in the control when unconstrained") {
  Scenario sc = make_scenario(MonotoneOperator::zero(1),
                              drift_linear(1, -0.8, {0.0}),
                              diffusion_scalar(1, 1.0), {0.3}, 800);
  sc.coeffs.drift_jacobian = jacobian_of_linear(1, -0.8);
  const JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
  ControlPath psi1 = ControlPath::sinusoid(sc.grid, 1.0, 2, {1.0});
  ControlPath psi2 = ControlPath::ramp(sc.grid, {-0.5}, {1.0});
  const double a = 0.6, b = -1.7;
  ControlPath combo(sc.grid, 1);
  for (int i = 0; i < sc.grid.steps; ++i)
    combo.at(i, 0) = a * psi1.at(i, 0) + b * psi2.at(i, 0);
  PathPair n1 = solve_mdp_skeleton(sc, psi1, jac);
  PathPair n2 = solve_mdp_skeleton(sc, psi2, jac);
  PathPair nc = solve_mdp_skeleton(sc, combo, jac);
  for (int i = 0; i <= sc.grid.steps; ++i)
    CHECK(std::fabs(nc.state.at(i, 0) -
                    (a * n1.state.at(i, 0) + b * n2.state.at(i, 0))) <= 1e-9);
}

TEST_CASE("jacobian field: finite differences match analytic to O(h^2)") {
  DriftFn b = [](VecView x, const LawProbe&, MutVecView out) {
    out[0] = std::sin(x[0]) + 0.5 * x[1] * x[1];
    out[1] = -x[0] * x[1];
  };
  DriftFn jac_analytic = [](VecView x, const LawProbe&, MutVecView out) {
    out[0] = std::cos(x[0]);
    out[1] = x[1];
    out[2] = -x[1];
    out[3] = -x[0];
  };
  const JacobianField fa = JacobianField::analytic(jac_analytic);
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> mean = {0.0, 0.0};
  LawProbe mu = dirac_probe(mean, 0.0);
  double prev_err = std::numeric_limits<double>::infinity();
  for (double h : {1e-4, 1e-5}) {
    const JacobianField fd = JacobianField::finite_difference(b, h);
    double worst = 0.0;
    std::mt19937_64 rng2(15);
    for (int it = 0; it < 20; ++it) {
      std::vector<double> x = {g(rng2), g(rng2)};
      std::vector<double> ja(4), jf(4);
      fa.eval(x, mu, ja);
      fd.eval(x, mu, jf);
      for (int k = 0; k < 4; ++k)
        worst = std::max(worst, std::fabs(ja[k] - jf[k]));
    }
    CHECK(worst <= 10.0 * h * h + 1e-10);
    CHECK(worst <= prev_err);
    prev_err = worst;
  }
}

TEST_CASE("solve_mdp_controlled: zero control matches the fluctuation process") {
  Scenario sc = make_scenario(half_line_op(),
                              drift_linear(1, -1.0, {0.0}),
                              diffusion_scalar(1, 1.0), {0.5}, 400);
  sc.coeffs.drift_jacobian = jacobian_of_linear(1, -1.0);
  sc.particles = 8;
  const double eps = 0.04, lambda = std::pow(eps, 0.25);
  MdpControlled ctl =
      solve_mdp_controlled(sc, eps, lambda, ControlPath(sc.grid, 1), 2);
  MdpEnsemble plain = mdp_process(sc, eps, lambda, 2);
  for (int j = 0; j < sc.particles; ++j)
    for (int i = 0; i <= sc.grid.steps; ++i)
      CHECK(ctl.fluctuations[j].at(i, 0) == plain.fluctuations[j].at(i, 0));
}

TEST_CASE("solve_mdp_controlled: additive gaussian law and skeleton limit") {
  Scenario sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                              diffusion_scalar(1, 1.0), {0.0}, 250);
  sc.coeffs.drift_jacobian = jacobian_constant(1, 0.0);
  sc.particles = 4000;
  const JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
  ControlPath psi = ControlPath::constant(sc.grid, {0.8});
  PathPair nu = solve_mdp_skeleton(sc, psi, jac);

  const double eps = 0.01, lambda = std::pow(eps, 0.25);
  MdpControlled ctl = solve_mdp_controlled(sc, eps, lambda, psi, 0);
  // M_T - int psi is centered gaussian with variance (eps/lambda^2) T
  double mean = 0.0, sq = 0.0;
  for (const auto& m : ctl.fluctuations) mean += m.at(sc.grid.steps, 0);
  mean /= sc.particles;
  for (const auto& m : ctl.fluctuations) {
    const double d = m.at(sc.grid.steps, 0) - mean;
    sq += d * d;
  }
  const double var = sq / sc.particles;
  const double expected_mean = 0.8;  // int_0^1 psi
  const double expected_var = eps / (lambda * lambda);
  CHECK(std::fabs(mean - expected_mean) <=
        4.0 * std::sqrt(expected_var / sc.particles) + 1e-3);
  CHECK(std::fabs(var - expected_var) <=
        4.0 * expected_var * std::sqrt(2.0 / sc.particles));

  // tube check: the controlled fluctuation tracks nu as eps -> 0
  double prev = std::numeric_limits<double>::infinity();
  Scenario small = sc;
  small.particles = 400;
  for (double e : {0.04, 0.01, 0.0025}) {
    const double lam = std::pow(e, 0.25);
    MdpControlled c2 = solve_mdp_controlled(small, e, lam, psi, 1);
    long inside = 0;
    double ms = 0.0;
    for (const auto& m : c2.fluctuations) {
      const double d = m.sup_distance(nu.state);
      ms += d * d;
      if (d <= 0.6) ++inside;
    }
    ms /= small.particles;
    CHECK(ms < prev);
    prev = ms;
    // noise scale sqrt(eps)/lambda = eps^{1/4} = 0.22: the 0.6-tube holds
    // with probability ~0.985 under the gaussian sup-law
    if (e == 0.0025) CHECK(double(inside) / small.particles > 0.95);
  }
}

TEST_CASE("weak_convergence_probe: oscillatory family") {
  SUBCASE("n = 0 returns zero exactly") {
    Scenario sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                                diffusion_scalar(1, 1.0), {0.0});
    ControlPath u = ControlPath::constant(sc.grid, {0.3});
    CHECK(weak_convergence_probe(sc, u, ProbeMode::oscillatory, 0) == 0.0);
  }

  SUBCASE("free case decays like the oscillation primitive") {
    Scenario sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                                diffusion_scalar(1, 1.0), {0.0});
    ControlPath u = ControlPath::constant(sc.grid, {0.3});
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {1, 2, 4, 8, 16, 32, 64}) {
      const double d = weak_convergence_probe(sc, u, ProbeMode::oscillatory, n);
      constexpr double pi = 3.14159265358979323846;
      CHECK(d <= 1.0 / (pi * n) + 3.0 * sc.grid.dt());
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
  }

  SUBCASE("reflection does not amplify the probe distance") {
    Scenario free_sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                                     diffusion_scalar(1, 1.0), {0.0});
    Scenario refl_sc = make_scenario(half_line_op(), drift_zero(1),
                                     diffusion_scalar(1, 1.0), {0.0});
    ControlPath u = ControlPath::constant(free_sc.grid, {-0.5});
    for (int n : {1, 2, 4, 8, 16, 32, 64}) {
      const double dr = weak_convergence_probe(refl_sc, u, ProbeMode::oscillatory, n);
      const double df = weak_convergence_probe(free_sc, u, ProbeMode::oscillatory, n);
      CHECK(dr <= df + 1e-9);
    }
  }
}

TEST_CASE("weak_convergence_probe: lowpass family decays") {
  Scenario sc = make_scenario(MonotoneOperator::zero(1), drift_zero(1),
                              diffusion_scalar(1, 1.0), {0.0}, 512);
  // mixed-frequency control
  ControlPath u(sc.grid, 1);
  for (int i = 0; i < sc.grid.steps; ++i) {
    const double t = sc.grid.time(i);
    u.at(i, 0) = std::sin(2.0 * 3.14159265358979 * 3.0 * t) +
                 0.5 * std::cos(2.0 * 3.14159265358979 * 11.0 * t);
  }
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {1, 4, 16, 64}) {
    const double d = weak_convergence_probe(sc, u, ProbeMode::lowpass, n);
    CHECK(d <= prev + 1e-12);
    prev = d;
  }
  CHECK(prev <= 1e-10);  // all modes kept reconstructs u
}

TEST_CASE("skeleton family: uniform bound over an energy class") {
  Scenario sc = make_scenario(half_line_op(),
                              drift_mean_field_linear(1, -1.0, -0.5, {0.0}),
                              diffusion_state_linear(1, 1.0, 0.3), {0.5}, 500);
  Scenario fine = sc;
  fine.grid = TimeGrid(1.0, 1000);

  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  const double m_bound = 2.0;
  double worst_coarse = 0.0, worst_fine = 0.0;
  for (int k = 0; k < 20; ++k) {
    ControlPath u(sc.grid, 1);
    for (int i = 0; i < sc.grid.steps; ++i) u.at(i, 0) = g(rng);
    // normalize into the energy class ||u||^2 <= 2m
    const double scale = std::sqrt(2.0 * m_bound / u.l2_norm_sq());
    for (int i = 0; i < sc.grid.steps; ++i) u.at(i, 0) *= scale;
    REQUIRE(u.in_energy_class(m_bound + 1e-12));

    PathPair sol = solve_skeleton(sc, u);
    double sup = 0.0;
    for (int i = 0; i <= sc.grid.steps; ++i)
      sup = std::max(sup, std::fabs(sol.state.at(i, 0)));
    worst_coarse = std::max(worst_coarse, sup);

    ControlPath uf(fine.grid, 1);
    for (int i = 0; i < fine.grid.steps; ++i) uf.at(i, 0) = u.at(i / 2, 0);
    PathPair solf = solve_skeleton(fine, uf);
    double supf = 0.0;
    for (int i = 0; i <= fine.grid.steps; ++i)
      supf = std::max(supf, std::fabs(solf.state.at(i, 0)));
    worst_fine = std::max(worst_fine, supf);
  }
  CHECK(worst_coarse < 10.0);
  CHECK(std::fabs(worst_fine - worst_coarse) <= 0.05 * (1.0 + worst_coarse));
}

TEST_CASE("control path: energy-class tagging and csv round trip") {
  TimeGrid grid(1.0, 100);
  ControlPath u = ControlPath::constant(grid, {2.0});
  CHECK(u.l2_norm_sq() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(u.in_energy_class(2.0));       // ||u||^2 = 4 = 2m with m = 2
  CHECK_FALSE(u.in_energy_class(1.9));

  std::stringstream ss;
  u.to_csv(ss);
  ControlPath back = ControlPath::from_csv(ss, grid, 1);
  for (int i = 0; i < grid.steps; ++i) CHECK(back.at(i, 0) == u.at(i, 0));
}
