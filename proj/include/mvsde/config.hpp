#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvsde/lab.hpp"

namespace mvsde {

// Control construction deferred until the grid is known.
struct ControlSpec {
  enum class Kind { constant, ramp, sinusoid, csv };
  Kind kind = Kind::constant;
  std::vector<double> value, from, to, direction;
  double amplitude = 1.0;
  int frequency = 1;
  std::string csv_path;

  ControlPath build(TimeGrid grid, int dim) const;
};

struct RateTargetSpec {
  enum class Kind { path_csv, terminal_halfspace, terminal_ball, tube };
  Kind kind = Kind::terminal_halfspace;
  std::string csv_path;        // path target from CSV (columns t, x1..xd)
  std::vector<double> normal;
  double offset = 0.0;
  std::vector<double> center;
  double radius = 0.0;
  std::string tube_center = "limit";  // limit | zero
};

// Fully validated run description: scenario, experiment and output policy,
// plus the canonical echo with every default materialized.
struct Config {
  std::uint64_t seed = 0;
  int threads = 0;

  Scenario scenario;

  std::string kind;  // limit|simulate|skeleton|mdp-skeleton|rate|ldp|mdp|laplace|converge
  double epsilon = 0.5;               // simulate
  long store_replicas = 1;            // simulate: replicas to persist
  std::vector<double> epsilons;       // scans
  double lambda_exponent = 0.25;      // mdp
  PathEvent event;                    // ldp / mdp
  PathFunctional functional;          // laplace
  double tolerance = 0.1;
  std::pair<double, double> slope_band = {0.85, 1.15};
  bool audit = false;
  ControlSpec control;                // skeleton / mdp-skeleton
  RateTargetSpec rate_target;         // rate
  std::string rate_regime = "ldp";

  std::string out_dir = "out";
  bool create_dir = true;
  std::vector<std::string> formats = {"csv", "json"};

  nlohmann::ordered_json canonical;
  std::string config_hash;  // digest of the canonical form

  ExperimentPlan to_plan() const;
};

struct ParseResult {
  std::optional<Config> config;
  std::vector<std::string> errors;  // "<key path>: message"
  bool ok() const { return config.has_value() && errors.empty(); }
};

// Parses and validates a JSON config. Unknown keys are rejected; every
// error names the offending key path.
ParseResult parse_config(const std::string& text);

// Digest of the canonical config with execution details (thread count,
// output directory) scrubbed: runs that must produce identical bytes hash
// identically.
std::string canonical_hash(const nlohmann::ordered_json& canonical);

// Compiled-in plug-in point for custom coefficient families referenced from
// configs as {"family": "custom", "name": "<registered>"}.
using DriftFactory = std::function<DriftFn(const nlohmann::json& params, int dim)>;
using DiffusionFactory =
    std::function<DiffusionFn(const nlohmann::json& params, int dim)>;
void register_custom_drift(const std::string& name, DriftFactory factory);
void register_custom_diffusion(const std::string& name, DiffusionFactory factory);

}  // namespace mvsde
