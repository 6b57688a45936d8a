#include "mvsde/lab.hpp"

#include <cmath>
#include <fstream>

#include "engine.hpp"

namespace mvsde {

double ExperimentPlan::lambda(double eps) const {
  return std::pow(eps, lambda_exponent);
}

void ExperimentPlan::validate(bool needs_lambda) const {
  if (epsilons.empty())
    throw ConfigError("experiment: epsilon grid must be nonempty");
  for (double e : epsilons)
    if (!(e > 0.0 && e <= 1.0))
      throw ConfigError("experiment: epsilon values must lie in (0, 1]");
  for (std::size_t i = 1; i < epsilons.size(); ++i)
    if (!(epsilons[i] < epsilons[i - 1]))
      throw ConfigError("experiment: epsilon grid must be strictly decreasing");
  if (replicas_per_eps < 1)
    throw ConfigError("experiment: replica budget must be >= 1");
  if (needs_lambda) {
    if (!(lambda_exponent > 0.0 && lambda_exponent < 0.5))
      throw ConfigError(
          "experiment: lambda exponent must lie in (0, 1/2) so that "
          "lambda -> 0 and eps/lambda^2 -> 0");
  }
}

namespace {

struct SweepSummary {
  long ok_replicas = 0;
  long failures = 0;
  long hits = 0;
  long samples = 0;
  long audit_violations = 0;
  std::vector<double> replica_values;  // per OK replica, in replica order
};

SweepSummary summarize(const std::vector<engine::ReplicaStat>& stats,
                       long particles,
                       const std::function<double(const engine::ReplicaStat&)>& value) {
  SweepSummary s;
  s.replica_values.reserve(stats.size());
  for (const auto& st : stats) {
    if (st.failed) {
      ++s.failures;
      continue;
    }
    ++s.ok_replicas;
    s.hits += st.hits;
    s.samples += particles;
    s.audit_violations += st.audit_violations;
    if (value) s.replica_values.push_back(value(st));
  }
  return s;
}

void check_failures(const ExperimentPlan& plan, const SweepSummary& s) {
  const double frac =
      double(s.failures) / double(std::max<long>(1, s.failures + s.ok_replicas));
  if (s.failures > 0 && frac >= plan.max_failure_fraction)
    throw NumericalError("experiment: replica failure fraction " +
                             format_double(frac) + " exceeds the exclusion cap",
                         frac);
}

// Mean and standard error over per-replica values, bit-stable order.
void mean_and_se(const std::vector<double>& vals, double& mean, double& se) {
  const long n = long(vals.size());
  mean = pairwise_sum(vals) / double(n);
  if (n < 2) {
    se = 0.0;
    return;
  }
  std::vector<double> sq(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double d = vals[i] - mean;
    sq[i] = d * d;
  }
  se = std::sqrt(pairwise_sum(sq) / (double(n) * double(n - 1)));
}

engine::EventSpec to_engine_event(const PathEvent& ev, const SamplePath* limit) {
  engine::EventSpec spec;
  switch (ev.kind) {
    case PathEvent::Kind::terminal_halfspace:
      spec.kind = engine::EventSpec::Kind::terminal_halfspace;
      spec.normal = ev.normal;
      spec.offset = ev.offset;
      break;
    case PathEvent::Kind::terminal_ball:
      spec.kind = engine::EventSpec::Kind::terminal_ball;
      spec.center = ev.center;
      spec.radius = ev.radius;
      break;
    case PathEvent::Kind::tube:
      spec.kind = engine::EventSpec::Kind::tube;
      spec.radius = ev.radius;
      spec.tube_reference =
          ev.tube_center == PathEvent::TubeCenter::limit ? limit : nullptr;
      break;
  }
  return spec;
}

RateTarget to_rate_target(const PathEvent& ev, const PathPair& limit,
                          const TimeGrid& grid, int dim) {
  switch (ev.kind) {
    case PathEvent::Kind::terminal_halfspace:
      return RateTarget::terminal_halfspace(ev.normal, ev.offset);
    case PathEvent::Kind::terminal_ball:
      return RateTarget::terminal_ball(ev.center, ev.radius);
    case PathEvent::Kind::tube: {
      SamplePath center = ev.tube_center == PathEvent::TubeCenter::limit
                              ? limit.state
                              : SamplePath(grid, dim);
      return RateTarget::tube(std::move(center), ev.radius);
    }
  }
  throw ConfigError("experiment: unsupported event");
}

Scenario plan_scenario(const ExperimentPlan& plan) {
  Scenario sc = plan.scenario;
  sc.seed = plan.seed;
  sc.validate();
  return sc;
}

std::optional<engine::AuditSpec> make_audit(const ExperimentPlan& plan,
                                            const Scenario& sc) {
  if (!plan.audit) return std::nullopt;
  engine::AuditSpec audit;
  audit.graph = make_probe_graph(sc.op, 4, sc.seed ^ 0x9e3779b97f4a7c15ull);
  audit.tol_base = 1e-8;
  return audit;
}

}  // namespace

ScalingReport run_convergence_experiment(const ExperimentPlan& plan) {
  plan.validate(false);
  Scenario sc = plan_scenario(plan);
  const PathPair limit = solve_limit(sc);

  ScalingReport rep;
  rep.experiment = "converge";
  rep.seed = plan.seed;
  rep.tolerance = plan.tolerance;

  auto audit = make_audit(plan, sc);
  for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
    const double eps = plan.epsilons[e];
    engine::ReplicaRequest rq;
    rq.eps = eps;
    rq.limit = &limit;
    rq.center_on_limit = true;
    rq.track_sup2 = true;
    if (audit) rq.audit = &*audit;
    engine::SweepOutputs out =
        engine::sweep(sc, rq, std::uint32_t(e * plan.replicas_per_eps),
                      plan.replicas_per_eps, plan.threads);
    SweepSummary s = summarize(out.stats, sc.particles,
                               [](const engine::ReplicaStat& st) { return st.mean_sup2; });
    check_failures(plan, s);
    rep.audit_violations += s.audit_violations;

    EpsilonRow row;
    row.epsilon = eps;
    row.samples = s.ok_replicas * sc.particles;
    row.failures = s.failures;
    mean_and_se(s.replica_values, row.p_hat, row.se);
    row.censored = !(row.p_hat > 0.0);
    if (!row.censored) {
      row.transformed = std::log(row.p_hat);
      row.transformed_se = row.se / row.p_hat;
    }
    rep.rows.push_back(row);
  }

  std::vector<double> x, y, w;
  for (const auto& row : rep.rows) {
    if (row.censored) continue;
    x.push_back(std::log(row.epsilon));
    y.push_back(row.transformed);
    w.push_back(1.0 / std::max(row.transformed_se * row.transformed_se, 1e-24));
  }
  if (x.size() >= 3) rep.fit = weighted_least_squares(x, y, w);
  rep.predicted = 0.5 * (plan.slope_band.first + plan.slope_band.second);
  if (!rep.fit.valid) {
    rep.verdict = "UNDERPOWERED";
  } else {
    const bool pass = rep.fit.slope >= plan.slope_band.first &&
                      rep.fit.slope <= plan.slope_band.second;
    rep.verdict = pass ? "PASS" : "FAIL";
  }
  return rep;
}

namespace {

// Shared scaffold of the LDP/MDP probability scans.
ScalingReport probability_scan(const ExperimentPlan& plan, bool mdp) {
  plan.validate(mdp);
  Scenario sc = plan_scenario(plan);
  const PathPair limit = solve_limit(sc);

  ScalingReport rep;
  rep.experiment = mdp ? "mdp" : "ldp";
  rep.seed = plan.seed;
  rep.tolerance = plan.tolerance;

  // Rate prediction over the event.
  RateQuery query;
  query.target = to_rate_target(plan.event, limit, sc.grid, sc.coeffs.dim);
  query.regime = mdp ? RateRegime::mdp : RateRegime::ldp;
  RateOptions ropt = plan.rate_options;
  ropt.seed = plan.seed ^ 0x5bf03635ull;
  const RateResult rate = rate_optimize(sc, query, ropt);
  rep.predicted = -rate.value;

  const engine::EventSpec ev = to_engine_event(plan.event, &limit.state);
  auto audit = make_audit(plan, sc);

  for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
    const double eps = plan.epsilons[e];
    const double lam = mdp ? plan.lambda(eps) : 0.0;
    const double speed = mdp ? eps / (lam * lam) : eps;

    engine::ReplicaRequest rq;
    rq.eps = eps;
    rq.event = &ev;
    if (mdp) {
      rq.limit = &limit;
      rq.center_on_limit = true;
      rq.obs_scale = 1.0 / lam;
    }
    if (audit) rq.audit = &*audit;
    engine::SweepOutputs out =
        engine::sweep(sc, rq, std::uint32_t(e * plan.replicas_per_eps),
                      plan.replicas_per_eps, plan.threads);
    const double inv_n = 1.0 / double(sc.particles);
    SweepSummary s = summarize(out.stats, sc.particles,
                               [inv_n](const engine::ReplicaStat& st) {
                                 return double(st.hits) * inv_n;
                               });
    check_failures(plan, s);
    rep.audit_violations += s.audit_violations;

    EpsilonRow row;
    row.epsilon = eps;
    row.lambda = lam;
    row.hits = s.hits;
    row.samples = s.samples;
    row.failures = s.failures;
    row.p_hat = double(s.hits) / double(s.samples);
    double mean = 0.0;
    mean_and_se(s.replica_values, mean, row.se);
    row.censored = s.hits == 0;
    if (!row.censored) {
      row.transformed = speed * std::log(row.p_hat);
      row.transformed_se = speed * row.se / row.p_hat;
    }
    rep.rows.push_back(row);
  }

  std::vector<double> x, y, w;
  for (const auto& row : rep.rows) {
    if (row.censored) continue;
    const double speed =
        mdp ? row.epsilon / (row.lambda * row.lambda) : row.epsilon;
    x.push_back(speed);
    y.push_back(row.transformed);
    w.push_back(1.0 / std::max(row.transformed_se * row.transformed_se, 1e-24));
  }
  if (x.size() >= 3) rep.fit = weighted_least_squares(x, y, w);

  const bool powered = !rep.rows.empty() && rep.rows.front().hits >= 100;
  if (!powered || !rep.fit.valid) {
    rep.verdict = "UNDERPOWERED";
  } else {
    rep.verdict = std::fabs(rep.fit.intercept - rep.predicted) <= plan.tolerance
                      ? "PASS"
                      : "FAIL";
  }
  return rep;
}

}  // namespace

ScalingReport run_ldp_scan(const ExperimentPlan& plan) {
  return probability_scan(plan, false);
}

ScalingReport run_mdp_scan(const ExperimentPlan& plan) {
  return probability_scan(plan, true);
}

ScalingReport run_laplace_check(const ExperimentPlan& plan,
                                const PathFunctional& f) {
  plan.validate(false);
  Scenario sc = plan_scenario(plan);

  ScalingReport rep;
  rep.experiment = "laplace";
  rep.seed = plan.seed;
  rep.tolerance = plan.tolerance;

  engine::FunctionalSpec spec;
  switch (f.kind) {
    case PathFunctional::Kind::zero:
      spec.kind = engine::FunctionalSpec::Kind::zero;
      break;
    case PathFunctional::Kind::clipped_terminal_sq:
      spec.kind = engine::FunctionalSpec::Kind::clipped_terminal_sq;
      break;
    case PathFunctional::Kind::escape_reward:
      spec.kind = engine::FunctionalSpec::Kind::escape_reward;
      break;
    case PathFunctional::Kind::custom_terminal:
      spec.kind = engine::FunctionalSpec::Kind::custom_terminal;
      spec.custom = f.custom;
      break;
  }

  // Comparison value: min over controls of f(Y^u) + energy(u).
  const int steps = sc.grid.steps;
  auto path_f = [&spec, steps](const SamplePath& y) {
    return spec.eval_terminal(y.value(steps));
  };
  RateOptions ropt = plan.rate_options;
  ropt.seed = plan.seed ^ 0x5bf03635ull;
  const RateResult comparison = minimize_path_functional(sc, path_f, ropt);
  rep.predicted = -comparison.value;

  auto audit = make_audit(plan, sc);
  for (std::size_t e = 0; e < plan.epsilons.size(); ++e) {
    const double eps = plan.epsilons[e];
    engine::ReplicaRequest rq;
    rq.eps = eps;
    rq.functional = &spec;
    rq.functional_scale = -1.0 / eps;
    if (audit) rq.audit = &*audit;
    engine::SweepOutputs out =
        engine::sweep(sc, rq, std::uint32_t(e * plan.replicas_per_eps),
                      plan.replicas_per_eps, plan.threads);

    // shift by the global max so the per-replica means are representable
    double global_max = -std::numeric_limits<double>::infinity();
    for (const auto& st : out.stats)
      if (!st.failed && st.lse_max > global_max) global_max = st.lse_max;
    SweepSummary s = summarize(
        out.stats, sc.particles, [&](const engine::ReplicaStat& st) {
          return std::exp(st.lse_max - global_max) * st.lse_sum /
                 double(sc.particles);
        });
    check_failures(plan, s);
    rep.audit_violations += s.audit_violations;

    EpsilonRow row;
    row.epsilon = eps;
    row.samples = s.ok_replicas * sc.particles;
    row.failures = s.failures;
    double mean = 0.0, se = 0.0;
    mean_and_se(s.replica_values, mean, se);
    row.censored = !(mean > 0.0) || !std::isfinite(global_max);
    if (!row.censored) {
      row.p_hat = mean * std::exp(global_max);  // may underflow; diagnostics only
      row.se = se * std::exp(global_max);
      row.transformed = eps * (global_max + std::log(mean));
      row.transformed_se = eps * se / mean;
    }
    rep.rows.push_back(row);
  }

  std::vector<double> x, y, w;
  for (const auto& row : rep.rows) {
    if (row.censored) continue;
    x.push_back(row.epsilon);
    y.push_back(row.transformed);
    w.push_back(1.0 / std::max(row.transformed_se * row.transformed_se, 1e-24));
  }
  if (x.size() >= 3) rep.fit = weighted_least_squares(x, y, w);
  if (!rep.fit.valid) {
    rep.verdict = "UNDERPOWERED";
  } else {
    rep.verdict = std::fabs(rep.fit.intercept - rep.predicted) <= plan.tolerance
                      ? "PASS"
                      : "FAIL";
  }
  return rep;
}

void emit_report(std::span<const ScalingReport> reports,
                 const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  const fs::path csv_path = directory / "report.csv";
  std::ofstream csv(csv_path);
  if (!csv)
    throw ConfigError("emit_report: cannot open " + csv_path.string());
  csv << "epsilon,lambda,p_hat,se,transformed,transformed_se,censored\n";
  for (const auto& rep : reports) {
    for (const auto& row : rep.rows) {
      csv << format_double(row.epsilon) << ',' << format_double(row.lambda)
          << ',' << format_double(row.p_hat) << ',' << format_double(row.se)
          << ',' << format_double(row.transformed) << ','
          << format_double(row.transformed_se) << ',' << (row.censored ? 1 : 0)
          << '\n';
    }
  }
  csv.close();
  if (!csv) throw ConfigError("emit_report: write failed for " + csv_path.string());

  const fs::path json_path = directory / "summary.json";
  std::ofstream js(json_path);
  if (!js)
    throw ConfigError("emit_report: cannot open " + json_path.string());
  js << "[";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    if (r) js << ",";
    js << "\n  {\"experiment\": \"" << rep.experiment << "\""
       << ", \"seed\": " << rep.seed
       << ", \"config_hash\": \"" << rep.config_hash << "\""
       << ", \"tolerance\": " << format_double(rep.tolerance)
       << ", \"predicted\": " << format_double(rep.predicted)
       << ", \"fit\": {\"valid\": " << (rep.fit.valid ? "true" : "false")
       << ", \"intercept\": " << format_double(rep.fit.intercept)
       << ", \"slope\": " << format_double(rep.fit.slope)
       << ", \"points\": " << rep.fit.points << "}"
       << ", \"audit_violations\": " << rep.audit_violations
       << ", \"verdict\": \"" << rep.verdict << "\"}";
  }
  js << "\n]\n";
  js.close();
  if (!js) throw ConfigError("emit_report: write failed for " + json_path.string());
}

}  // namespace mvsde
