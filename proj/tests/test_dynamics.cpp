#include <cmath>
#include <random>

#include "doctest.h"
#include "engine.hpp"
#include "mvsde/dynamics.hpp"

using namespace mvsde;

namespace {

MonotoneOperator half_line_op() {
  return MonotoneOperator::indicator(ConvexDomain::half_space({-1.0}, 0.0));
}

Scenario base_scenario(int dim = 1) {
  Scenario sc;
  sc.op = MonotoneOperator::zero(dim);
  sc.coeffs.dim = dim;
  sc.coeffs.drift = drift_zero(dim);
  sc.coeffs.diffusion = diffusion_scalar(dim, 1.0);
  sc.start.assign(dim, 0.0);
  sc.grid = TimeGrid(1.0, 1000);
  sc.particles = 1;
  sc.replicas = 1;
  sc.seed = 99;
  sc.validate();
  return sc;
}

double half_normal_cdf(double x, double var) {
  return x <= 0.0 ? 0.0 : std::erf(x / std::sqrt(2.0 * var));
}

double ks_distance_half_normal(std::vector<double> samples, double var) {
  std::sort(samples.begin(), samples.end());
  const double n = double(samples.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = half_normal_cdf(samples[i], var);
    ks = std::max(ks, std::fabs(f - double(i) / n));
    ks = std::max(ks, std::fabs(double(i + 1) / n - f));
  }
  return ks;
}

}  // namespace

TEST_CASE("solve_limit: stationary point inside the domain") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.start = {0.7};
  sc.validate();
  PathPair sol = solve_limit(sc);
  for (int i = 0; i <= sc.grid.steps; ++i) CHECK(sol.state.at(i, 0) == 0.7);
  CHECK(sol.reflection.total_variation() == 0.0);
}

TEST_CASE("solve_limit: linear decay against the exact ODE") {
  Scenario sc = base_scenario();
  sc.coeffs.drift = drift_linear(1, -1.0, {0.0});
  sc.start = {1.0};
  sc.grid = TimeGrid(1.0, 10000);  // dt = 1e-4
  sc.validate();
  PathPair sol = solve_limit(sc);
  CHECK(std::fabs(sol.state.at(sc.grid.steps, 0) - std::exp(-1.0)) < 1e-4);
}

TEST_CASE("solve_limit: reflected ramp closed form") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.coeffs.drift = drift_linear(1, 0.0, {-1.0});
  sc.start = {0.5};
  sc.validate();
  const double dt = sc.grid.dt();
  PathPair sol = solve_limit(sc);
  for (int i = 0; i <= sc.grid.steps; ++i) {
    const double expected = std::max(0.5 - sc.grid.time(i), 0.0);
    CHECK(std::fabs(sol.state.at(i, 0) - expected) <= 2.0 * dt);
  }
  CHECK(std::fabs(sol.reflection.total_variation() - 0.5) <= 2.0 * dt);

  auto graph = make_probe_graph(sc.op, 6, 17);
  auto rep = variation_inequality_check(sol.state, sol.reflection, graph,
                                        sc.op.domain().interior_point());
  CHECK(rep.ok);
}

TEST_CASE("simulate_particles: zero diffusion reproduces the limit") {
  SUBCASE("law-independent drift: bit-identical") {
    Scenario sc = base_scenario();
    sc.op = half_line_op();
    sc.coeffs.drift = drift_linear(1, -1.0, {0.0});
    sc.coeffs.diffusion = diffusion_scalar(1, 0.0);
    sc.start = {0.5};
    sc.particles = 16;
    sc.validate();
    PathPair limit = solve_limit(sc);
    ParticleEnsemble ens = simulate_particles(sc, 0.5);
    for (const auto& path : ens.states)
      for (int i = 0; i <= sc.grid.steps; ++i)
        CHECK(path.at(i, 0) == limit.state.at(i, 0));
  }
  SUBCASE("mean-field drift: equal up to empirical-mean rounding") {
    Scenario sc = base_scenario();
    sc.op = half_line_op();
    sc.coeffs.drift = drift_mean_field_linear(1, -1.0, -0.5, {0.0});
    sc.coeffs.diffusion = diffusion_scalar(1, 0.0);
    sc.start = {0.5};
    sc.particles = 24;
    sc.validate();
    PathPair limit = solve_limit(sc);
    ParticleEnsemble ens = simulate_particles(sc, 0.5);
    for (const auto& path : ens.states)
      CHECK(path.sup_distance(limit.state) <= 1e-12);
  }
}

TEST_CASE("simulate_particles: reduces to explicit Euler-Maruyama when unconstrained") {
  Scenario sc = base_scenario();
  sc.coeffs.drift = drift_linear(1, -0.5, {0.2});
  sc.coeffs.diffusion = diffusion_state_linear(1, 1.0, 0.1);
  sc.start = {0.3};
  sc.particles = 3;
  sc.grid = TimeGrid(1.0, 500);
  sc.validate();
  const double eps = 1.0;
  ParticleEnsemble ens = simulate_particles(sc, eps, /*replica=*/4);

  GaussianStream stream(sc.seed);
  const double dt = sc.grid.dt();
  const double noise_scale = std::sqrt(eps) * std::sqrt(dt);
  for (int j = 0; j < sc.particles; ++j) {
    double x = 0.3;
    for (int i = 0; i < sc.grid.steps; ++i) {
      std::vector<double> xi(1);
      stream.fill(4, std::uint32_t(j), std::uint32_t(i), xi);
      double p = x + dt * (-0.5 * x + 0.2);
      p += noise_scale * ((1.0 + 0.1 * x) * xi[0]);
      x = p;
      CHECK(ens.states[j].at(i + 1, 0) == x);
    }
  }
}

TEST_CASE("simulate_particles: reflected terminal law close to the folded normal") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.particles = 1000;
  sc.grid = TimeGrid(1.0, 1000);
  sc.validate();

  engine::ReplicaRequest rq;
  rq.eps = 1.0;
  rq.want_terminal = true;
  engine::SweepOutputs out = engine::sweep(sc, rq, 0, 20, 1);
  std::vector<double> terminals = out.terminals;
  REQUIRE(terminals.size() == 20000);
  CHECK(ks_distance_half_normal(terminals, 1.0) < 0.03);
}

TEST_CASE("simulate_particles: mean-field ensemble mean follows the moment ODE") {
  Scenario sc = base_scenario();
  sc.coeffs.drift = drift_mean_field_linear(1, -1.0, -0.5, {0.0});
  sc.start = {0.5};
  sc.particles = 200;
  sc.grid = TimeGrid(1.0, 400);
  sc.validate();

  const int replicas = 32;
  std::vector<double> means(replicas);
  for (int r = 0; r < replicas; ++r) {
    ParticleEnsemble ens = simulate_particles(sc, 0.25, std::uint32_t(r));
    double m = 0.0;
    for (const auto& p : ens.states) m += p.at(sc.grid.steps, 0);
    means[r] = m / sc.particles;
  }
  double mean = pairwise_sum(means) / replicas;
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  const double se = std::sqrt(var / (replicas * (replicas - 1.0)));
  // dm/dt = -m: the mean-field term cancels in the ensemble mean
  const double target = 0.5 * std::exp(-1.0);
  CHECK(std::fabs(mean - target) <= 3.0 * se + 2e-3);
}

TEST_CASE("simulate_coupled_limit: distance vanishes without noise and decreases in eps") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.coeffs.drift = drift_mean_field_linear(1, -1.0, -0.5, {0.0});
  sc.start = {0.5};
  sc.particles = 100;
  sc.grid = TimeGrid(1.0, 400);
  sc.validate();

  engine::ReplicaRequest rq;
  rq.eps = 0.0;
  PathPair limit = solve_limit(sc);
  rq.limit = &limit;
  rq.center_on_limit = true;
  rq.track_sup2 = true;
  engine::SweepOutputs quiet = engine::sweep(sc, rq, 0, 4, 1);
  // up to empirical-mean rounding of identical particles
  for (const auto& st : quiet.stats) CHECK(st.mean_sup2 <= 1e-24);

  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.125, 0.0625, 0.03125, 0.015625}) {
    rq.eps = eps;
    engine::SweepOutputs out = engine::sweep(sc, rq, 0, 64, 1);
    std::vector<double> vals;
    for (const auto& st : out.stats) vals.push_back(st.mean_sup2);
    const double mean = pairwise_sum(vals) / double(vals.size());
    CHECK(mean < prev);
    prev = mean;
  }
}

TEST_CASE("mdp_process: zero perturbation and the exact gaussian law") {
  Scenario sc = base_scenario();
  sc.particles = 4000;
  sc.grid = TimeGrid(1.0, 200);
  sc.validate();

  SUBCASE("eps = 0 gives the zero fluctuation") {
    MdpEnsemble m = mdp_process(sc, 0.0, 0.5);
    for (const auto& path : m.fluctuations)
      for (int i = 0; i <= sc.grid.steps; ++i) CHECK(path.at(i, 0) == 0.0);
  }

  SUBCASE("terminal variance matches (eps/lambda^2) T") {
    const double eps = 0.04;
    const double lambda = std::pow(eps, 0.25);
    MdpEnsemble m = mdp_process(sc, eps, lambda);
    double sq = 0.0;
    for (const auto& path : m.fluctuations) {
      const double v = path.at(sc.grid.steps, 0);
      sq += v * v;
    }
    const double var = sq / sc.particles;
    const double expected = eps / (lambda * lambda);  // T = 1
    // chi-square spread: relative sd sqrt(2/n)
    CHECK(std::fabs(var - expected) <=
          4.0 * expected * std::sqrt(2.0 / sc.particles));
  }

  SUBCASE("second moments stay bounded along the eps grid") {
    double bound = 0.0;
    for (double eps : {0.25, 0.0625, 0.015625, 0.00390625}) {
      const double lambda = std::pow(eps, 0.25);
      engine::ReplicaRequest rq;
      rq.eps = eps;
      PathPair limit = solve_limit(sc);
      rq.limit = &limit;
      rq.center_on_limit = true;
      rq.obs_scale = 1.0 / lambda;
      rq.track_sup2 = true;
      Scenario small = sc;
      small.particles = 500;
      engine::SweepOutputs out = engine::sweep(small, rq, 0, 8, 1);
      std::vector<double> vals;
      for (const auto& st : out.stats) vals.push_back(st.mean_sup2);
      bound = std::max(bound, pairwise_sum(vals) / double(vals.size()));
    }
    CHECK(bound < 10.0);  // sup over the grid is finite and tame
  }

  SUBCASE("speed condition is enforced") {
    CHECK_THROWS_AS(mdp_process(sc, 0.5, 0.1), ConfigError);
  }
}

TEST_CASE("scheme: strong self-consistency order under mesh refinement") {
  // coupled refinement: the coarse level consumes pair-sums of the fine
  // increments, so both levels discretize the same Brownian path
  const int coarse_steps = 64;
  const int n = 4000;
  std::mt19937_64 rng(31337);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto run_level = [&](int steps, const std::vector<double>& noise) {
    Scenario sc = base_scenario();
    sc.coeffs.drift = drift_linear(1, -1.0, {0.3});
    sc.coeffs.diffusion = diffusion_state_linear(1, 0.5, 0.2);
    sc.start = {0.4};
    sc.grid = TimeGrid(1.0, steps);
    sc.particles = n;
    sc.validate();
    engine::ReplicaRequest rq;
    rq.eps = 1.0;
    rq.want_terminal = true;
    rq.noise_override = noise.data();
    engine::SweepOutputs out = engine::sweep(sc, rq, 0, 1, 1);
    return out.terminals;
  };

  // finest noise: 4x coarse resolution
  std::vector<double> fine(std::size_t(4 * coarse_steps) * n);
  for (auto& v : fine) v = gauss(rng);
  auto coarsen = [&](const std::vector<double>& src, int src_steps) {
    std::vector<double> dst(src.size() / 2);
    const int dst_steps = src_steps / 2;
    for (int i = 0; i < dst_steps; ++i)
      for (int j = 0; j < n; ++j)
        dst[std::size_t(i) * n + j] =
            (src[std::size_t(2 * i) * n + j] + src[std::size_t(2 * i + 1) * n + j]) /
            std::sqrt(2.0);
    return dst;
  };
  auto mid = coarsen(fine, 4 * coarse_steps);
  auto coarse = coarsen(mid, 2 * coarse_steps);

  auto t_fine = run_level(4 * coarse_steps, fine);
  auto t_mid = run_level(2 * coarse_steps, mid);
  auto t_coarse = run_level(coarse_steps, coarse);

  double e1 = 0.0, e2 = 0.0;
  for (int j = 0; j < n; ++j) {
    e1 += (t_coarse[j] - t_mid[j]) * (t_coarse[j] - t_mid[j]);
    e2 += (t_mid[j] - t_fine[j]) * (t_mid[j] - t_fine[j]);
  }
  e1 = std::sqrt(e1 / n);
  e2 = std::sqrt(e2 / n);
  const double order = std::log2(e1 / e2);
  CHECK(order >= 0.4);
}

TEST_CASE("coupled runs: mean-square growth respects the one-sided bound") {
  // b = sin(x) has one-sided Lipschitz constant 1, sigma = 0.5x has 0.5;
  // identical noise from different starts must satisfy the Gronwall-form
  // envelope with rate 2L + L_sigma^2 + 1
  auto make = [&](double h) {
    Scenario sc = base_scenario();
    sc.coeffs.drift = [](VecView x, const LawProbe&, MutVecView out) {
      out[0] = std::sin(x[0]);
    };
    sc.coeffs.diffusion = diffusion_state_linear(1, 0.0, 0.5);
    sc.start = {h};
    sc.particles = 2000;
    sc.grid = TimeGrid(1.0, 250);
    sc.validate();
    return sc;
  };
  Scenario a = make(0.2), b = make(0.9);
  ParticleEnsemble ea = simulate_particles(a, 1.0);
  ParticleEnsemble eb = simulate_particles(b, 1.0);
  const double d0 = (0.9 - 0.2) * (0.9 - 0.2);
  const double rate = 2.0 * 1.0 + 0.25 + 1.0;
  for (int i : {50, 125, 250}) {
    double ms = 0.0;
    for (int j = 0; j < a.particles; ++j) {
      const double d = ea.states[j].at(i, 0) - eb.states[j].at(i, 0);
      ms += d * d;
    }
    ms /= a.particles;
    CHECK(ms <= d0 * std::exp(rate * a.grid.time(i)));
  }
}

TEST_CASE("engine: state confinement is exact and the audit accepts solver output") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.coeffs.drift = drift_mean_field_linear(1, -1.0, -0.5, {0.0});
  sc.start = {0.25};
  sc.particles = 50;
  sc.grid = TimeGrid(1.0, 500);
  sc.validate();

  engine::AuditSpec audit;
  audit.graph = make_probe_graph(sc.op, 4, 7);
  engine::ReplicaRequest rq;
  rq.eps = 0.5;
  rq.audit = &audit;
  engine::FullResult full = engine::run_full(sc, rq, 0);
  CHECK(full.stat.audit_violations == 0);

  for (const auto& path : full.main.states)
    for (int i = 0; i <= sc.grid.steps; ++i)
      CHECK(sc.op.domain().contains(path.value(i), 0.0));

  // post-hoc check agrees with the online audit
  for (std::size_t j = 0; j < full.main.states.size(); ++j) {
    auto rep = variation_inequality_check(full.main.states[j],
                                          full.main.reflections[j], audit.graph,
                                          sc.op.domain().interior_point());
    CHECK(rep.ok);
  }
}

TEST_CASE("engine: failed replicas are recorded, solvers throw") {
  Scenario sc = base_scenario();
  sc.coeffs.drift = [](VecView x, const LawProbe&, MutVecView out) {
    out[0] = 1e8 * x[0];  // explodes at dt = 1e-3
  };
  sc.start = {1.0};
  sc.particles = 2;
  sc.grid = TimeGrid(1.0, 100);
  sc.validate();

  engine::ReplicaRequest rq;
  rq.eps = 0.0;
  engine::SweepOutputs out = engine::sweep(sc, rq, 0, 2, 1);
  CHECK(out.stats[0].failed);
  CHECK(out.stats[1].failed);
  CHECK_THROWS_AS(simulate_particles(sc, 0.0), NumericalError);
}

TEST_CASE("engine: identical results for any thread count and rerun") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.coeffs.drift = drift_mean_field_linear(1, -1.0, -0.5, {0.0});
  sc.start = {0.5};
  sc.particles = 40;
  sc.grid = TimeGrid(1.0, 200);
  sc.validate();
  PathPair limit = solve_limit(sc);

  engine::ReplicaRequest rq;
  rq.eps = 0.25;
  rq.limit = &limit;
  rq.center_on_limit = true;
  rq.track_sup2 = true;
  rq.want_terminal = true;

  engine::SweepOutputs serial = engine::sweep(sc, rq, 0, 12, 1);
  engine::SweepOutputs threaded = engine::sweep(sc, rq, 0, 12, 3);
  engine::SweepOutputs rerun = engine::sweep(sc, rq, 0, 12, 5);
  REQUIRE(serial.stats.size() == threaded.stats.size());
  for (std::size_t r = 0; r < serial.stats.size(); ++r) {
    CHECK(serial.stats[r].mean_sup2 == threaded.stats[r].mean_sup2);
    CHECK(serial.stats[r].mean_sup2 == rerun.stats[r].mean_sup2);
  }
  CHECK(serial.terminals == threaded.terminals);
  CHECK(serial.terminals == rerun.terminals);
}

TEST_CASE("scenario validation: start point must lie in the domain closure") {
  Scenario sc = base_scenario();
  sc.op = half_line_op();
  sc.start = {-1.0};
  CHECK_THROWS_AS(sc.validate(), ConfigError);
}
