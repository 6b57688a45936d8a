#include "mvsde/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mvsde/rate.hpp"
#include "mvsde/skeleton.hpp"

namespace mvsde {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + p.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + p.string());
}

void write_trajectory_csv(const fs::path& p,
                          const std::vector<const ParticleEnsemble*>& replicas,
                          const TimeGrid& grid, int dim) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + p.string());
  out << "replica,particle,step,t";
  for (int k = 0; k < dim; ++k) out << ",x" << (k + 1);
  for (int k = 0; k < dim; ++k) out << ",k" << (k + 1);
  out << "\n";
  for (std::size_t r = 0; r < replicas.size(); ++r) {
    const ParticleEnsemble& ens = *replicas[r];
    for (std::size_t j = 0; j < ens.states.size(); ++j) {
      const SamplePath cum = ens.reflections[j].cumulative();
      for (int i = 0; i <= grid.steps; ++i) {
        out << r << ',' << j << ',' << i << ',' << format_double(grid.time(i));
        for (int k = 0; k < dim; ++k)
          out << ',' << format_double(ens.states[j].at(i, k));
        for (int k = 0; k < dim; ++k) out << ',' << format_double(cum.at(i, k));
        out << "\n";
      }
    }
  }
  if (!out) throw ConfigError("write failed for " + p.string());
}

void write_trajectory_bin(const fs::path& p,
                          const std::vector<const ParticleEnsemble*>& replicas,
                          const TimeGrid& grid, int dim) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + p.string());
  const char magic[8] = {'M', 'V', 'S', 'D', 'E', 'T', 'R', '1'};
  out.write(magic, 8);
  const std::int64_t header[4] = {std::int64_t(replicas.size()),
                                  replicas.empty()
                                      ? 0
                                      : std::int64_t(replicas[0]->states.size()),
                                  grid.steps, dim};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (const ParticleEnsemble* ens : replicas) {
    for (std::size_t j = 0; j < ens->states.size(); ++j) {
      const auto& raw = ens->states[j].raw();
      out.write(reinterpret_cast<const char*>(raw.data()),
                std::streamsize(raw.size() * sizeof(double)));
      const auto& inc = ens->reflections[j].raw();
      out.write(reinterpret_cast<const char*>(inc.data()),
                std::streamsize(inc.size() * sizeof(double)));
    }
  }
  if (!out) throw ConfigError("write failed for " + p.string());
}

std::string rate_result_json(const RateResult& r, const std::string& control_ref) {
  std::string s = "{\n";
  s += "  \"value\": " + format_double(r.value) + ",\n";
  s += "  \"constraint_residual\": " + format_double(r.constraint_residual) + ",\n";
  s += "  \"iterations\": " + std::to_string(r.iterations) + ",\n";
  s += std::string("  \"converged\": ") + (r.converged ? "true" : "false") + ",\n";
  s += std::string("  \"certified\": ") + (r.certified ? "true" : "false") + ",\n";
  s += "  \"control\": \"" + control_ref + "\"\n";
  s += "}\n";
  return s;
}

SamplePath path_from_csv(const std::string& path, TimeGrid grid, int dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("path csv: cannot open " + path);
  SamplePath g(grid, dim);
  std::string line;
  int node = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError("path csv: non-numeric row");
    }
    first = false;
    if (int(vals.size()) != dim + 1)
      throw ConfigError("path csv: expected columns t,x1..xd");
    if (node > grid.steps) throw ConfigError("path csv: more rows than grid nodes");
    for (int k = 0; k < dim; ++k) g.at(node, k) = vals[1 + k];
    ++node;
  }
  if (node != grid.nodes())
    throw ConfigError("path csv: expected exactly " +
                      std::to_string(grid.nodes()) + " rows");
  return g;
}

int run_experiment(const Config& cfg, const fs::path& dir, int threads) {
  const Scenario& sc = cfg.scenario;
  const int dim = sc.coeffs.dim;
  const bool want_csv =
      std::find(cfg.formats.begin(), cfg.formats.end(), "csv") != cfg.formats.end();
  const bool want_bin =
      std::find(cfg.formats.begin(), cfg.formats.end(), "bin") != cfg.formats.end();

  if (cfg.kind == "limit") {
    PathPair limit = solve_limit(sc);
    ParticleEnsemble ens;
    ens.states.push_back(limit.state);
    ens.reflections.push_back(limit.reflection);
    if (want_csv)
      write_trajectory_csv(dir / "trajectory.csv", {&ens}, sc.grid, dim);
    if (want_bin)
      write_trajectory_bin(dir / "trajectory.bin", {&ens}, sc.grid, dim);
    return 0;
  }
  if (cfg.kind == "simulate") {
    std::vector<ParticleEnsemble> stored;
    const long n = std::min<long>(cfg.store_replicas, sc.replicas);
    for (long r = 0; r < n; ++r)
      stored.push_back(simulate_particles(sc, cfg.epsilon, std::uint32_t(r)));
    std::vector<const ParticleEnsemble*> refs;
    for (const auto& e : stored) refs.push_back(&e);
    if (want_csv) write_trajectory_csv(dir / "trajectory.csv", refs, sc.grid, dim);
    if (want_bin) write_trajectory_bin(dir / "trajectory.bin", refs, sc.grid, dim);
    return 0;
  }
  if (cfg.kind == "skeleton" || cfg.kind == "mdp-skeleton") {
    const ControlPath u = cfg.control.build(sc.grid, dim);
    PathPair sol;
    if (cfg.kind == "skeleton") {
      sol = solve_skeleton(sc, u);
    } else {
      const JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
      sol = solve_mdp_skeleton(sc, u, jac);
    }
    ParticleEnsemble ens;
    ens.states.push_back(sol.state);
    ens.reflections.push_back(sol.reflection);
    if (want_csv)
      write_trajectory_csv(dir / "trajectory.csv", {&ens}, sc.grid, dim);
    if (want_bin)
      write_trajectory_bin(dir / "trajectory.bin", {&ens}, sc.grid, dim);
    std::ofstream uc(dir / "control.csv", std::ios::binary);
    u.to_csv(uc);
    return 0;
  }
  if (cfg.kind == "rate") {
    RateQuery query;
    query.regime = cfg.rate_regime == "mdp" ? RateRegime::mdp : RateRegime::ldp;
    switch (cfg.rate_target.kind) {
      case RateTargetSpec::Kind::path_csv:
        query.target = RateTarget::for_path(
            path_from_csv(cfg.rate_target.csv_path, sc.grid, dim));
        break;
      case RateTargetSpec::Kind::terminal_halfspace:
        query.target = RateTarget::terminal_halfspace(cfg.rate_target.normal,
                                                      cfg.rate_target.offset);
        break;
      case RateTargetSpec::Kind::terminal_ball:
        query.target = RateTarget::terminal_ball(cfg.rate_target.center,
                                                 cfg.rate_target.radius);
        break;
      case RateTargetSpec::Kind::tube: {
        SamplePath center = cfg.rate_target.tube_center == "limit"
                                ? solve_limit(sc).state
                                : SamplePath(sc.grid, dim);
        query.target = RateTarget::tube(std::move(center), cfg.rate_target.radius);
        break;
      }
    }
    RateOptions opt;
    opt.seed = cfg.seed ^ 0x5bf03635ull;
    const RateResult res = evaluate_rate(sc, query, opt);
    std::ofstream uc(dir / "control.csv", std::ios::binary);
    res.control.to_csv(uc);
    write_text(dir / "rate.json", rate_result_json(res, "control.csv"));
    return res.converged ? 0 : 2;
  }

  // scans
  ExperimentPlan plan = cfg.to_plan();
  plan.threads = threads;
  plan.output_directory = dir.string();
  ScalingReport report;
  if (cfg.kind == "ldp") {
    report = run_ldp_scan(plan);
  } else if (cfg.kind == "mdp") {
    plan.lambda_exponent = cfg.lambda_exponent;
    report = run_mdp_scan(plan);
  } else if (cfg.kind == "laplace") {
    report = run_laplace_check(plan, cfg.functional);
  } else if (cfg.kind == "converge") {
    report = run_convergence_experiment(plan);
  } else {
    throw ConfigError("unknown experiment kind '" + cfg.kind + "'");
  }
  report.config_hash = cfg.config_hash;
  emit_report(std::span<const ScalingReport>(&report, 1), dir);
  return report.verdict == "PASS" ? 0 : 2;
}

}  // namespace

int dispatch(const Config& cfg_in, const DispatchOverrides& overrides) {
  Config cfg = cfg_in;
  if (overrides.seed) {
    cfg.seed = *overrides.seed;
    cfg.scenario.seed = *overrides.seed;
    cfg.canonical["seed"] = *overrides.seed;
    cfg.config_hash = canonical_hash(cfg.canonical);
  }
  if (overrides.out_dir) {
    cfg.out_dir = *overrides.out_dir;
    cfg.canonical["output"]["directory"] = *overrides.out_dir;
  }
  const int threads = overrides.threads ? *overrides.threads : cfg.threads;

  try {
    fs::path dir(cfg.out_dir);
    if (!fs::exists(dir)) {
      if (!cfg.create_dir) {
        std::cerr << "mvsde: output directory '" << dir.string()
                  << "' does not exist and output.create is false\n";
        return 1;
      }
      fs::create_directories(dir);
    }
    write_text(dir / "config.json", cfg.canonical.dump(2) + "\n");
    return run_experiment(cfg, dir, threads);
  } catch (const ConfigError& e) {
    std::cerr << "mvsde: config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "mvsde: numerical error: " << e.what()
              << " (residual " << format_double(e.residual()) << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mvsde: error: " << e.what() << "\n";
    return 1;
  }
}

int run_config_text(const std::string& text, const DispatchOverrides& overrides,
                    std::string* error_out) {
  ParseResult parsed = parse_config(text);
  if (!parsed.ok()) {
    std::string msg;
    for (const auto& e : parsed.errors) msg += e + "\n";
    if (error_out) *error_out = msg;
    return 1;
  }
  return dispatch(*parsed.config, overrides);
}

std::string describe_schema() {
  return R"(mvsde config schema (JSON)

{
  "seed": <integer >= 0>,            optional, default 0
  "threads": <integer>,              optional; 0 = MVSDE_THREADS env, serial default
  "scenario": {
    "dim": <d>,                      required
    "operator":
        {"kind": "zero"}
      | {"kind": "indicator", "domain": <domain>}
      | {"kind": "linear", "matrix": <dxd or scalar>}
      | {"kind": "sum", "domain": <domain>, "matrix": <dxd or scalar>},
    "coefficients": {
      "drift":  {"family": "zero"}
              | {"family": "linear", "alpha": a, "gamma": [..]}
              | {"family": "mean-field-linear", "alpha": a, "beta": b, "gamma": [..]}
              | {"family": "custom", "name": "<registered>"},
      "sigma":  {"family": "constant", "value": <dxd or scalar>}
              | {"family": "state-linear", "offset": s0, "slope": s1}
              | {"family": "custom", "name": "<registered>"},
      "one_sided_lipschitz": L,      optional metadata
      "growth_exponent": q,          optional metadata
      "jacobian": {"mode": "auto"|"analytic"|"fd", "step": h},
      "perturbation": {
        "rho_b":     {"family": "zero"} | {"family": "power", "scale": c, "exponent": p},
        "rho_sigma": {"family": "zero"} | {"family": "power", "scale": c, "exponent": p},
        "direction": [..]            optional unit direction of the drift shift
      }
    },
    "h": [..],                       required start point, must lie in the domain closure
    "horizon": T, "dt": dt,          uniform grid with round(T/dt) steps
    "particles": N, "replicas": R
  },
  "experiment": {
    "kind": "limit" | "simulate" | "skeleton" | "mdp-skeleton" | "rate"
          | "ldp" | "mdp" | "laplace" | "converge",
    -- simulate:      "epsilon": e in [0,1], "store_replicas": n
    -- skeleton/mdp-skeleton:
                      "control": {"family": "constant", "value": [..]}
                               | {"family": "ramp", "from": [..], "to": [..]}
                               | {"family": "sinusoid", "amplitude": a,
                                  "frequency": n, "direction": [..]}
                               | {"csv": "<file: t,u1..ud>"}
    -- rate:          "regime": "ldp"|"mdp",
                      "target": {"kind": "path", "csv": "<file: t,x1..xd>"}
                              | {"kind": "terminal-halfspace", "normal": [..], "offset": r}
                              | {"kind": "terminal-ball", "center": [..], "radius": r}
                              | {"kind": "tube", "radius": r, "center": "limit"|"zero"}
    -- ldp:           "epsilons": [strictly decreasing in (0,1]],
                      "event": <target-like, see above>, "tolerance": tol, "audit": bool
    -- mdp:           ldp fields plus "lambda_exponent": a in (0, 1/2)
    -- laplace:       "epsilons": [..], "tolerance": tol,
                      "functional": {"family": "zero"|"clipped-terminal-sq"|"escape-reward"}
    -- converge:      "epsilons": [..], "slope_band": [low, high]
  },
  "output": {"directory": "out", "create": true, "formats": ["csv","json","bin"]}
}

Events for ldp/mdp: {"kind": "terminal-halfspace", "normal": [..], "offset": r}
                  | {"kind": "terminal-ball", "center": [..], "radius": r}
                  | {"kind": "tube", "radius": r, "center": "limit"|"zero"}

Outputs: config.json (canonical echo) plus, by kind:
  limit/simulate/skeleton/mdp-skeleton -> trajectory.csv [trajectory.bin]
      columns: replica,particle,step,t,x1..xd,k1..kd (k = cumulative correction)
  rate -> rate.json + control.csv
  ldp/mdp/laplace/converge -> report.csv + summary.json
      report.csv columns: epsilon,lambda,p_hat,se,transformed,transformed_se,censored

Exit codes: 0 complete/PASS, 2 verdict not PASS, 1 error.
)";
}

}  // namespace mvsde
