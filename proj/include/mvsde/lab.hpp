#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>

#include "mvsde/rate.hpp"

namespace mvsde {

// Rare-event specification on simulated paths.
struct PathEvent {
  enum class Kind { terminal_halfspace, terminal_ball, tube };
  enum class TubeCenter { limit, zero };
  Kind kind = Kind::terminal_halfspace;
  std::vector<double> normal;  // <n, x_T> >= offset
  double offset = 0.0;
  std::vector<double> center;  // terminal ball
  double radius = 0.0;         // ball / tube radius
  TubeCenter tube_center = TubeCenter::limit;
};

// Bounded path functional for the Laplace check.
struct PathFunctional {
  enum class Kind { zero, clipped_terminal_sq, escape_reward, custom_terminal };
  Kind kind = Kind::zero;
  std::function<double(VecView)> custom;  // terminal state -> value
};

struct ExperimentPlan {
  Scenario scenario;
  std::vector<double> epsilons;   // strictly decreasing, in (0, 1)
  double lambda_exponent = 0.25;  // lambda(eps) = eps^a with a in (0, 1/2)
  PathEvent event;
  long replicas_per_eps = 1000;
  std::uint64_t seed = 0;  // overrides scenario.seed
  std::string output_directory;
  double tolerance = 0.1;                          // verdict tolerance
  std::pair<double, double> slope_band = {0.85, 1.15};  // converge verdict
  int threads = 0;     // 0: MVSDE_THREADS env, serial default
  bool audit = false;  // online discrete membership audit
  double max_failure_fraction = 1e-3;
  RateOptions rate_options;

  double lambda(double eps) const;
  void validate(bool needs_lambda) const;
};

struct EpsilonRow {
  double epsilon = 0.0;
  double lambda = 0.0;
  double p_hat = 0.0;
  double se = 0.0;
  double transformed = 0.0;
  double transformed_se = 0.0;
  bool censored = false;
  long hits = 0;
  long samples = 0;
  long failures = 0;
};

struct ScalingReport {
  std::string experiment;
  std::vector<EpsilonRow> rows;
  LinearFit fit;           // transformed against the speed parameter
  double predicted = 0.0;  // comparison value (-inf I, -min(f+I), or slope)
  std::string verdict;     // PASS / FAIL / UNDERPOWERED
  std::uint64_t seed = 0;
  std::string config_hash;  // filled by the dispatcher
  double tolerance = 0.0;
  long audit_violations = 0;
};

// E sup_t |X^eps - X0|^2 per eps; log-log slope against the expected band.
ScalingReport run_convergence_experiment(const ExperimentPlan& plan);

// Event probabilities per eps; eps*log(p_hat) trend against -inf I.
ScalingReport run_ldp_scan(const ExperimentPlan& plan);

// eps*log E exp(-f/eps) per eps against -min over controls of f(Y^u) + I.
ScalingReport run_laplace_check(const ExperimentPlan& plan,
                                const PathFunctional& f);

// Event probabilities of the rescaled fluctuation per eps at speed
// eps/lambda^2 against -inf of the linearized rate.
ScalingReport run_mdp_scan(const ExperimentPlan& plan);

// Writes report.csv (fixed schema: epsilon, lambda, p_hat, se, transformed,
// transformed_se, censored) and summary.json. Byte-deterministic given
// identical inputs.
void emit_report(std::span<const ScalingReport> reports,
                 const std::filesystem::path& directory);

}  // namespace mvsde
