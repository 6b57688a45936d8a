#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mvsde/lab.hpp"

using namespace mvsde;

namespace {

double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

Scenario gaussian_scenario(int steps = 100) {
  Scenario sc;
  sc.op = MonotoneOperator::zero(1);
  sc.coeffs.dim = 1;
  sc.coeffs.drift = drift_zero(1);
  sc.coeffs.diffusion = diffusion_scalar(1, 1.0);
  sc.start = {0.0};
  sc.grid = TimeGrid(1.0, steps);  // terminal law is exactly N(0, eps T)
  sc.particles = 50;
  sc.replicas = 400;
  sc.validate();
  return sc;
}

ExperimentPlan gaussian_plan(std::uint64_t seed) {
  ExperimentPlan plan;
  plan.scenario = gaussian_scenario();
  plan.epsilons = {0.4, 0.2, 0.1};
  plan.event.kind = PathEvent::Kind::terminal_halfspace;
  plan.event.normal = {1.0};
  plan.event.offset = 1.0;
  plan.replicas_per_eps = 400;
  plan.seed = seed;
  plan.tolerance = 0.1;
  return plan;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("plan validation: grids and lambda rule") {
  ExperimentPlan plan = gaussian_plan(1);
  plan.epsilons = {0.1, 0.2};
  CHECK_THROWS_AS(plan.validate(false), ConfigError);
  plan.epsilons = {0.2, 0.1};
  CHECK_NOTHROW(plan.validate(false));
  plan.lambda_exponent = 0.5;
  CHECK_THROWS_AS(plan.validate(true), ConfigError);
  plan.lambda_exponent = 0.25;
  CHECK_NOTHROW(plan.validate(true));
}

TEST_CASE("ldp scan: rows match the exact gaussian tail") {
  ExperimentPlan plan = gaussian_plan(2024);
  plan.replicas_per_eps = 1200;
  ScalingReport rep = run_ldp_scan(plan);
  REQUIRE(rep.rows.size() == 3);
  for (const auto& row : rep.rows) {
    REQUIRE_FALSE(row.censored);
    const double exact = row.epsilon * std::log(normal_sf(1.0 / std::sqrt(row.epsilon)));
    CHECK(std::fabs(row.transformed - exact) <= 4.0 * row.transformed_se + 1e-6);
  }
  // optimizer prediction: -I with I = 1/(2T)
  CHECK(std::fabs(rep.predicted - (-0.5)) <= 0.02);
  CHECK(rep.seed == 2024);
}

TEST_CASE("ldp scan: transformed values trend monotonically toward the rate") {
  ExperimentPlan plan = gaussian_plan(7);
  plan.epsilons = {0.4, 0.3, 0.2, 0.15, 0.1};
  plan.replicas_per_eps = 1200;
  ScalingReport rep = run_ldp_scan(plan);
  for (std::size_t i = 0; i + 1 < rep.rows.size(); ++i) {
    const auto& a = rep.rows[i];
    const auto& b = rep.rows[i + 1];
    REQUIRE_FALSE(a.censored);
    REQUIRE_FALSE(b.censored);
    // eps log p increases toward -I as eps decreases, up to 1-se noise
    CHECK(b.transformed >= a.transformed - (a.transformed_se + b.transformed_se));
  }
}

TEST_CASE("ldp scan: censoring and underpowered verdicts") {
  ExperimentPlan plan = gaussian_plan(3);
  plan.event.offset = 50.0;  // unreachable at these budgets
  plan.replicas_per_eps = 20;
  ScalingReport rep = run_ldp_scan(plan);
  for (const auto& row : rep.rows) {
    CHECK(row.censored);
    CHECK(row.hits == 0);
  }
  CHECK_FALSE(rep.fit.valid);
  CHECK(rep.verdict == "UNDERPOWERED");
}

TEST_CASE("ldp scan: standard errors cover the truth across seeds") {
  // meta-test: the true tail lies within 3 se of the estimate in >= 19/20 runs
  const double p_true = normal_sf(1.0 / std::sqrt(0.4));
  int covered = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ExperimentPlan plan = gaussian_plan(seed);
    plan.epsilons = {0.4};
    ScalingReport rep = run_ldp_scan(plan);
    const auto& row = rep.rows[0];
    if (std::fabs(row.p_hat - p_true) <= 3.0 * row.se) ++covered;
  }
  CHECK(covered >= 19);
}

TEST_CASE("ldp scan: tube event around the limit passes with zero rate") {
  ExperimentPlan plan = gaussian_plan(5);
  plan.scenario.coeffs.drift = drift_linear(1, -1.0, {0.0});
  plan.scenario.start = {0.4};
  plan.scenario.validate();
  plan.event = PathEvent{};
  plan.event.kind = PathEvent::Kind::tube;
  plan.event.radius = 3.0;  // overwhelming probability at these eps
  plan.event.tube_center = PathEvent::TubeCenter::limit;
  plan.replicas_per_eps = 300;
  ScalingReport rep = run_ldp_scan(plan);
  CHECK(rep.predicted == 0.0);
  CHECK(rep.verdict == "PASS");
}

TEST_CASE("convergence experiment: slope one without family perturbation") {
  ExperimentPlan plan;
  plan.scenario = gaussian_scenario(250);
  plan.scenario.op =
      MonotoneOperator::indicator(ConvexDomain::half_space({-1.0}, 0.0));
  plan.scenario.coeffs.drift = drift_mean_field_linear(1, -1.0, -0.5, {0.0});
  plan.scenario.start = {0.5};
  plan.scenario.particles = 32;
  plan.scenario.validate();
  plan.epsilons = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};
  plan.replicas_per_eps = 300;
  plan.seed = 99;
  plan.slope_band = {0.8, 1.2};
  ScalingReport rep = run_convergence_experiment(plan);
  CHECK(rep.fit.valid);
  CHECK(rep.verdict == "PASS");
  CHECK(rep.fit.slope >= 0.8);
  CHECK(rep.fit.slope <= 1.2);
}

TEST_CASE("convergence experiment: drift perturbation sets the slope") {
  auto run_with_rho = [&](double exponent, std::vector<double> epsilons,
                          std::pair<double, double> band) {
    ExperimentPlan plan;
    plan.scenario = gaussian_scenario(250);
    plan.scenario.coeffs.drift = drift_linear(1, -1.0, {0.0});
    plan.scenario.start = {0.5};
    plan.scenario.particles = 32;
    attach_uniform_perturbation(plan.scenario.coeffs,
                                rho_power(1.0, exponent), rho_zero());
    plan.scenario.validate();
    plan.epsilons = std::move(epsilons);
    plan.replicas_per_eps = 200;
    plan.seed = 31;
    plan.slope_band = band;
    return run_convergence_experiment(plan);
  };
  // rho_b = eps^{1/2}: the eps and rho^2 terms scale together, slope 1
  ScalingReport r1 = run_with_rho(
      0.5, {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128}, {0.8, 1.2});
  CHECK(r1.verdict == "PASS");
  // rho_b = eps^{1/4}: the rho^2 = sqrt(eps) term dominates once the eps
  // noise term is negligible, so probe deeper into the grid; slope ~ 1/2
  ScalingReport r2 = run_with_rho(
      0.25, {std::pow(2.0, -6), std::pow(2.0, -8), std::pow(2.0, -10),
             std::pow(2.0, -12), std::pow(2.0, -14)},
      {0.35, 0.65});
  CHECK(r2.verdict == "PASS");
}

TEST_CASE("laplace check: zero functional is exactly zero") {
  ExperimentPlan plan = gaussian_plan(17);
  plan.replicas_per_eps = 50;
  PathFunctional f;
  f.kind = PathFunctional::Kind::zero;
  ScalingReport rep = run_laplace_check(plan, f);
  for (const auto& row : rep.rows) {
    CHECK(row.transformed == 0.0);
    CHECK(row.transformed_se == 0.0);
  }
  CHECK(std::fabs(rep.predicted) <= 1e-6);
  CHECK(rep.verdict == "PASS");
}

TEST_CASE("laplace check: rows match the quadrature oracle") {
  // f(x) = 1 - min(1, |x_T|): E exp(-f/eps) has a 1d integral oracle, and
  // the comparison value is -min_c (1 - min(1,c) + c^2/2) = -1/2
  ExperimentPlan plan = gaussian_plan(23);
  plan.replicas_per_eps = 2000;
  plan.tolerance = 0.25;  // extrapolation from moderate eps is coarse
  PathFunctional f;
  f.kind = PathFunctional::Kind::escape_reward;
  ScalingReport rep = run_laplace_check(plan, f);

  auto oracle = [](double eps) {
    // integrate exp(-(1 - min(1,|x|))/eps) against N(0, eps)
    const double sd = std::sqrt(eps);
    const int n = 40001;
    const double lo = -12.0 * sd, hi = 12.0 * sd;
    const double h = (hi - lo) / (n - 1);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = lo + i * h;
      const double φweight = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      const double density =
          std::exp(-x * x / (2.0 * eps)) / std::sqrt(2.0 * 3.14159265358979 * eps);
      const double fval = 1.0 - std::min(1.0, std::fabs(x));
      acc += φweight * density * std::exp(-fval / eps);
    }
    return eps * std::log(acc * h);
  };
  for (const auto& row : rep.rows) {
    REQUIRE_FALSE(row.censored);
    CHECK(std::fabs(row.transformed - oracle(row.epsilon)) <=
          4.0 * row.transformed_se + 2e-3);
  }
  CHECK(std::fabs(rep.predicted - (-0.5)) <= 0.02);
}

TEST_CASE("laplace check: clipped quadratic attains its minimum at zero") {
  ExperimentPlan plan = gaussian_plan(29);
  plan.replicas_per_eps = 400;
  PathFunctional f;
  f.kind = PathFunctional::Kind::clipped_terminal_sq;
  ScalingReport rep = run_laplace_check(plan, f);
  // -min_c { min(1, c^2) + c^2/2 } = 0 at c = 0
  CHECK(std::fabs(rep.predicted) <= 1e-4);
}

TEST_CASE("mdp scan: rows match the rescaled gaussian tail") {
  ExperimentPlan plan = gaussian_plan(2025);
  plan.scenario.coeffs.drift_jacobian = jacobian_constant(1, 0.0);
  plan.epsilons = {0.4, 0.3, 0.2};
  plan.replicas_per_eps = 1500;
  plan.lambda_exponent = 0.25;
  plan.event.offset = 1.0;
  ScalingReport rep = run_mdp_scan(plan);
  REQUIRE(rep.rows.size() == 3);
  for (const auto& row : rep.rows) {
    REQUIRE_FALSE(row.censored);
    const double lam = std::pow(row.epsilon, 0.25);
    const double speed = row.epsilon / (lam * lam);
    const double sd = std::sqrt(speed);  // T = 1
    const double exact = speed * std::log(normal_sf(1.0 / sd));
    CHECK(std::fabs(row.transformed - exact) <= 4.0 * row.transformed_se + 1e-6);
    CHECK(row.lambda == doctest::Approx(lam).epsilon(1e-12));
  }
  // linearized rate over the event: 1/(2T)
  CHECK(std::fabs(rep.predicted - (-0.5)) <= 0.02);
}

TEST_CASE("emit_report: deterministic bytes, header-only when empty") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mvsde_lab_test";
  fs::create_directories(dir);

  SUBCASE("empty list") {
    emit_report({}, dir);
    CHECK(slurp(dir / "report.csv") ==
          "epsilon,lambda,p_hat,se,transformed,transformed_se,censored\n");
  }

  SUBCASE("single row and rerun identity") {
    ScalingReport rep;
    rep.experiment = "ldp";
    rep.seed = 9;
    rep.tolerance = 0.1;
    rep.predicted = -0.5;
    rep.verdict = "PASS";
    EpsilonRow row;
    row.epsilon = 0.25;
    row.p_hat = 0.125;
    row.se = 0.01;
    row.transformed = 0.25 * std::log(0.125);
    row.transformed_se = 0.02;
    rep.rows.push_back(row);
    emit_report(std::span<const ScalingReport>(&rep, 1), dir);
    const std::string csv1 = slurp(dir / "report.csv");
    const std::string json1 = slurp(dir / "summary.json");
    CHECK(csv1.find("0.25,0,0.125,0.01,") != std::string::npos);
    emit_report(std::span<const ScalingReport>(&rep, 1), dir);
    CHECK(slurp(dir / "report.csv") == csv1);
    CHECK(slurp(dir / "summary.json") == json1);
  }

  fs::remove_all(dir);
}

TEST_CASE("experiment failure cap: exploding replicas abort the run") {
  ExperimentPlan plan = gaussian_plan(4);
  plan.scenario.coeffs.drift = [](VecView x, const LawProbe&, MutVecView out) {
    out[0] = 1e8 * x[0];
  };
  plan.scenario.start = {1.0};
  plan.scenario.validate();
  plan.replicas_per_eps = 10;
  CHECK_THROWS_AS(run_ldp_scan(plan), NumericalError);
}
