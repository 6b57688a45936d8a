#include "mvsde/config.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace mvsde {

using nlohmann::json;
using nlohmann::ordered_json;

ControlPath ControlSpec::build(TimeGrid grid, int dim) const {
  switch (kind) {
    case Kind::constant: {
      std::vector<double> v = value;
      if (v.size() == 1 && dim > 1) v.assign(dim, value[0]);
      if (v.size() != std::size_t(dim))
        throw ConfigError("control: value dimension mismatch");
      return ControlPath::constant(grid, v);
    }
    case Kind::ramp:
      return ControlPath::ramp(grid, from, to);
    case Kind::sinusoid: {
      std::vector<double> dir = direction;
      if (dir.empty()) {
        dir.assign(dim, 0.0);
        dir[0] = 1.0;
      }
      return ControlPath::sinusoid(grid, amplitude, frequency, dir);
    }
    case Kind::csv:
      return ControlPath::from_csv_file(csv_path, grid, dim);
  }
  throw ConfigError("control: unsupported kind");
}

namespace {

struct Registry {
  std::map<std::string, DriftFactory> drifts;
  std::map<std::string, DiffusionFactory> diffusions;
  std::mutex mutex;
};
Registry& registry() {
  static Registry r;
  return r;
}

// --- validation helpers -----------------------------------------------------

struct Ctx {
  std::vector<std::string>* errors;

  void fail(const std::string& path, const std::string& msg) const {
    errors->push_back(path + ": " + msg);
  }
};

bool check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed, const Ctx& ctx) {
  bool ok = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        found = true;
        break;
      }
    if (!found) {
      ctx.fail(path + "." + it.key(), "unknown key");
      ok = false;
    }
  }
  return ok;
}

double get_number(const json& j, const std::string& path, const char* key,
                  double fallback, const Ctx& ctx, bool required = false) {
  if (!j.contains(key)) {
    if (required) ctx.fail(path + "." + key, "missing required key");
    return fallback;
  }
  if (!j[key].is_number()) {
    ctx.fail(path + "." + key, "expected a number");
    return fallback;
  }
  return j[key].get<double>();
}

long get_integer(const json& j, const std::string& path, const char* key,
                 long fallback, const Ctx& ctx, bool required = false) {
  if (!j.contains(key)) {
    if (required) ctx.fail(path + "." + key, "missing required key");
    return fallback;
  }
  if (!j[key].is_number_integer()) {
    ctx.fail(path + "." + key, "expected an integer");
    return fallback;
  }
  return j[key].get<long>();
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& fallback, const Ctx& ctx,
                       bool required = false) {
  if (!j.contains(key)) {
    if (required) ctx.fail(path + "." + key, "missing required key");
    return fallback;
  }
  if (!j[key].is_string()) {
    ctx.fail(path + "." + key, "expected a string");
    return fallback;
  }
  return j[key].get<std::string>();
}

bool get_bool(const json& j, const std::string& path, const char* key,
              bool fallback, const Ctx& ctx) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) {
    ctx.fail(path + "." + key, "expected a boolean");
    return fallback;
  }
  return j[key].get<bool>();
}

// Vector entry that may be "inf" / "-inf" for box bounds.
double bound_entry(const json& v, const std::string& path, const Ctx& ctx) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  ctx.fail(path, "expected a number or \"inf\"/\"-inf\"");
  return 0.0;
}

std::vector<double> get_vector(const json& j, const std::string& path,
                               const char* key, const Ctx& ctx,
                               bool required = false, bool allow_inf = false) {
  std::vector<double> out;
  if (!j.contains(key)) {
    if (required) ctx.fail(path + "." + key, "missing required key");
    return out;
  }
  if (!j[key].is_array()) {
    ctx.fail(path + "." + key, "expected an array");
    return out;
  }
  int idx = 0;
  for (const auto& v : j[key]) {
    const std::string p = path + "." + key + "[" + std::to_string(idx++) + "]";
    if (allow_inf) {
      out.push_back(bound_entry(v, p, ctx));
    } else if (v.is_number()) {
      out.push_back(v.get<double>());
    } else {
      ctx.fail(p, "expected a number");
    }
  }
  return out;
}

std::vector<double> get_matrix(const json& j, const std::string& path,
                               const char* key, int dim, const Ctx& ctx) {
  std::vector<double> out;
  if (!j.contains(key)) {
    ctx.fail(path + "." + key, "missing required key");
    return out;
  }
  const auto& m = j[key];
  if (m.is_number()) {  // scalar shorthand: value * identity
    out.assign(std::size_t(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) out[std::size_t(i) * dim + i] = m.get<double>();
    return out;
  }
  if (!m.is_array() || int(m.size()) != dim) {
    ctx.fail(path + "." + key, "expected a " + std::to_string(dim) + "x" +
                                   std::to_string(dim) + " matrix");
    return out;
  }
  for (const auto& row : m) {
    if (!row.is_array() || int(row.size()) != dim) {
      ctx.fail(path + "." + key, "expected square rows");
      return {};
    }
    for (const auto& v : row) {
      if (!v.is_number()) {
        ctx.fail(path + "." + key, "expected numeric entries");
        return {};
      }
      out.push_back(v.get<double>());
    }
  }
  return out;
}

// --- scenario blocks ---------------------------------------------------------

std::optional<ConvexDomain> parse_domain(const json& j, const std::string& path,
                                         int dim, const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  const std::string kind = get_string(j, path, "kind", "", ctx, true);
  try {
    if (kind == "whole-space") {
      check_keys(j, path, {"kind"}, ctx);
      return ConvexDomain::whole_space(dim);
    }
    if (kind == "half-space") {
      check_keys(j, path, {"kind", "normal", "offset"}, ctx);
      auto normal = get_vector(j, path, "normal", ctx, true);
      const double offset = get_number(j, path, "offset", 0.0, ctx, true);
      if (int(normal.size()) != dim) {
        ctx.fail(path + ".normal", "dimension mismatch");
        return std::nullopt;
      }
      return ConvexDomain::half_space(std::move(normal), offset);
    }
    if (kind == "box") {
      check_keys(j, path, {"kind", "lower", "upper"}, ctx);
      auto lower = get_vector(j, path, "lower", ctx, true, true);
      auto upper = get_vector(j, path, "upper", ctx, true, true);
      if (int(lower.size()) != dim || int(upper.size()) != dim) {
        ctx.fail(path, "box bounds dimension mismatch");
        return std::nullopt;
      }
      return ConvexDomain::box(std::move(lower), std::move(upper));
    }
    if (kind == "ball") {
      check_keys(j, path, {"kind", "center", "radius"}, ctx);
      auto center = get_vector(j, path, "center", ctx, true);
      const double radius = get_number(j, path, "radius", 1.0, ctx, true);
      if (int(center.size()) != dim) {
        ctx.fail(path + ".center", "dimension mismatch");
        return std::nullopt;
      }
      return ConvexDomain::ball(std::move(center), radius);
    }
    if (kind == "polyhedron") {
      check_keys(j, path, {"kind", "normals", "offsets", "interior_point"}, ctx);
      std::vector<std::vector<double>> normals;
      if (j.contains("normals") && j["normals"].is_array()) {
        for (const auto& row : j["normals"]) {
          std::vector<double> n;
          for (const auto& v : row) n.push_back(v.get<double>());
          normals.push_back(std::move(n));
        }
      } else {
        ctx.fail(path + ".normals", "missing or not an array");
        return std::nullopt;
      }
      auto offsets = get_vector(j, path, "offsets", ctx, true);
      auto interior = get_vector(j, path, "interior_point", ctx, true);
      return ConvexDomain::polyhedron(std::move(normals), std::move(offsets),
                                      std::move(interior));
    }
  } catch (const std::exception& e) {
    ctx.fail(path, e.what());
    return std::nullopt;
  }
  ctx.fail(path + ".kind", "unknown domain kind '" + kind + "'");
  return std::nullopt;
}

std::optional<MonotoneOperator> parse_operator(const json& j,
                                               const std::string& path, int dim,
                                               const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  const std::string kind = get_string(j, path, "kind", "zero", ctx);
  try {
    if (kind == "zero") {
      check_keys(j, path, {"kind"}, ctx);
      return MonotoneOperator::zero(dim);
    }
    if (kind == "indicator") {
      check_keys(j, path, {"kind", "domain"}, ctx);
      if (!j.contains("domain")) {
        ctx.fail(path + ".domain", "missing required key");
        return std::nullopt;
      }
      auto domain = parse_domain(j["domain"], path + ".domain", dim, ctx);
      if (!domain) return std::nullopt;
      return MonotoneOperator::indicator(std::move(*domain));
    }
    if (kind == "linear") {
      check_keys(j, path, {"kind", "matrix"}, ctx);
      auto matrix = get_matrix(j, path, "matrix", dim, ctx);
      if (matrix.empty()) return std::nullopt;
      return MonotoneOperator::linear(dim, std::move(matrix));
    }
    if (kind == "sum") {
      check_keys(j, path, {"kind", "domain", "matrix"}, ctx);
      if (!j.contains("domain")) {
        ctx.fail(path + ".domain", "missing required key");
        return std::nullopt;
      }
      auto domain = parse_domain(j["domain"], path + ".domain", dim, ctx);
      auto matrix = get_matrix(j, path, "matrix", dim, ctx);
      if (!domain || matrix.empty()) return std::nullopt;
      return MonotoneOperator::sum(std::move(*domain), std::move(matrix));
    }
  } catch (const std::exception& e) {
    ctx.fail(path, e.what());
    return std::nullopt;
  }
  ctx.fail(path + ".kind", "unknown operator kind '" + kind + "'");
  return std::nullopt;
}

struct DriftParse {
  DriftFn fn;
  DriftFn jacobian;  // analytic when the family provides one
};

std::optional<DriftParse> parse_drift(const json& j, const std::string& path,
                                      int dim, const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  const std::string family = get_string(j, path, "family", "", ctx, true);
  try {
    if (family == "zero") {
      check_keys(j, path, {"family"}, ctx);
      return DriftParse{drift_zero(dim), jacobian_constant(dim, 0.0)};
    }
    if (family == "linear") {
      check_keys(j, path, {"family", "alpha", "gamma"}, ctx);
      const double alpha = get_number(j, path, "alpha", 0.0, ctx, true);
      auto gamma = get_vector(j, path, "gamma", ctx);
      return DriftParse{drift_linear(dim, alpha, gamma),
                        jacobian_of_linear(dim, alpha)};
    }
    if (family == "mean-field-linear") {
      check_keys(j, path, {"family", "alpha", "beta", "gamma"}, ctx);
      const double alpha = get_number(j, path, "alpha", 0.0, ctx, true);
      const double beta = get_number(j, path, "beta", 0.0, ctx, true);
      auto gamma = get_vector(j, path, "gamma", ctx);
      return DriftParse{drift_mean_field_linear(dim, alpha, beta, gamma),
                        jacobian_of_mean_field_linear(dim, alpha, beta)};
    }
    if (family == "custom") {
      const std::string name = get_string(j, path, "name", "", ctx, true);
      std::lock_guard<std::mutex> lock(registry().mutex);
      auto it = registry().drifts.find(name);
      if (it == registry().drifts.end()) {
        ctx.fail(path + ".name", "no registered custom drift '" + name + "'");
        return std::nullopt;
      }
      return DriftParse{it->second(j, dim), nullptr};
    }
  } catch (const std::exception& e) {
    ctx.fail(path, e.what());
    return std::nullopt;
  }
  ctx.fail(path + ".family", "unknown drift family '" + family + "'");
  return std::nullopt;
}

std::optional<DiffusionFn> parse_sigma(const json& j, const std::string& path,
                                       int dim, const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  const std::string family = get_string(j, path, "family", "", ctx, true);
  try {
    if (family == "constant") {
      check_keys(j, path, {"family", "value"}, ctx);
      auto matrix = get_matrix(j, path, "value", dim, ctx);
      if (matrix.empty()) return std::nullopt;
      return diffusion_constant(dim, std::move(matrix));
    }
    if (family == "state-linear") {
      check_keys(j, path, {"family", "offset", "slope"}, ctx);
      const double offset = get_number(j, path, "offset", 1.0, ctx, true);
      const double slope = get_number(j, path, "slope", 0.0, ctx, true);
      return diffusion_state_linear(dim, offset, slope);
    }
    if (family == "custom") {
      const std::string name = get_string(j, path, "name", "", ctx, true);
      std::lock_guard<std::mutex> lock(registry().mutex);
      auto it = registry().diffusions.find(name);
      if (it == registry().diffusions.end()) {
        ctx.fail(path + ".name", "no registered custom diffusion '" + name + "'");
        return std::nullopt;
      }
      return it->second(j, dim);
    }
  } catch (const std::exception& e) {
    ctx.fail(path, e.what());
    return std::nullopt;
  }
  ctx.fail(path + ".family", "unknown sigma family '" + family + "'");
  return std::nullopt;
}

RhoFn parse_rho(const json& j, const std::string& path, const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return rho_zero();
  }
  const std::string family = get_string(j, path, "family", "zero", ctx);
  if (family == "zero") {
    check_keys(j, path, {"family"}, ctx);
    return rho_zero();
  }
  if (family == "power") {
    check_keys(j, path, {"family", "scale", "exponent"}, ctx);
    const double scale = get_number(j, path, "scale", 1.0, ctx, true);
    const double exponent = get_number(j, path, "exponent", 1.0, ctx, true);
    try {
      return rho_power(scale, exponent);
    } catch (const std::exception& e) {
      ctx.fail(path, e.what());
      return rho_zero();
    }
  }
  ctx.fail(path + ".family", "unknown rho family '" + family + "'");
  return rho_zero();
}

std::optional<ControlSpec> parse_control(const json& j, const std::string& path,
                                         const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  ControlSpec spec;
  if (j.contains("csv")) {
    check_keys(j, path, {"csv"}, ctx);
    spec.kind = ControlSpec::Kind::csv;
    spec.csv_path = get_string(j, path, "csv", "", ctx, true);
    return spec;
  }
  const std::string family = get_string(j, path, "family", "", ctx, true);
  if (family == "constant") {
    check_keys(j, path, {"family", "value"}, ctx);
    spec.kind = ControlSpec::Kind::constant;
    spec.value = get_vector(j, path, "value", ctx, true);
    return spec;
  }
  if (family == "ramp") {
    check_keys(j, path, {"family", "from", "to"}, ctx);
    spec.kind = ControlSpec::Kind::ramp;
    spec.from = get_vector(j, path, "from", ctx, true);
    spec.to = get_vector(j, path, "to", ctx, true);
    return spec;
  }
  if (family == "sinusoid") {
    check_keys(j, path, {"family", "amplitude", "frequency", "direction"}, ctx);
    spec.kind = ControlSpec::Kind::sinusoid;
    spec.amplitude = get_number(j, path, "amplitude", 1.0, ctx);
    spec.frequency = int(get_integer(j, path, "frequency", 1, ctx));
    spec.direction = get_vector(j, path, "direction", ctx);
    return spec;
  }
  ctx.fail(path + ".family", "unknown control family '" + family + "'");
  return std::nullopt;
}

std::optional<PathEvent> parse_event(const json& j, const std::string& path,
                                     int dim, const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  PathEvent ev;
  const std::string kind = get_string(j, path, "kind", "", ctx, true);
  if (kind == "terminal-halfspace") {
    check_keys(j, path, {"kind", "normal", "offset"}, ctx);
    ev.kind = PathEvent::Kind::terminal_halfspace;
    ev.normal = get_vector(j, path, "normal", ctx, true);
    ev.offset = get_number(j, path, "offset", 0.0, ctx, true);
    if (int(ev.normal.size()) != dim) {
      ctx.fail(path + ".normal", "dimension mismatch");
      return std::nullopt;
    }
    return ev;
  }
  if (kind == "terminal-ball") {
    check_keys(j, path, {"kind", "center", "radius"}, ctx);
    ev.kind = PathEvent::Kind::terminal_ball;
    ev.center = get_vector(j, path, "center", ctx, true);
    ev.radius = get_number(j, path, "radius", 1.0, ctx, true);
    if (int(ev.center.size()) != dim) {
      ctx.fail(path + ".center", "dimension mismatch");
      return std::nullopt;
    }
    return ev;
  }
  if (kind == "tube") {
    check_keys(j, path, {"kind", "radius", "center"}, ctx);
    ev.kind = PathEvent::Kind::tube;
    ev.radius = get_number(j, path, "radius", 0.1, ctx, true);
    const std::string center = get_string(j, path, "center", "limit", ctx);
    if (center == "limit") {
      ev.tube_center = PathEvent::TubeCenter::limit;
    } else if (center == "zero") {
      ev.tube_center = PathEvent::TubeCenter::zero;
    } else {
      ctx.fail(path + ".center", "expected \"limit\" or \"zero\"");
      return std::nullopt;
    }
    return ev;
  }
  ctx.fail(path + ".kind", "unknown event kind '" + kind + "'");
  return std::nullopt;
}

std::optional<PathFunctional> parse_functional(const json& j,
                                               const std::string& path,
                                               const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  check_keys(j, path, {"family"}, ctx);
  const std::string family = get_string(j, path, "family", "", ctx, true);
  PathFunctional f;
  if (family == "zero") {
    f.kind = PathFunctional::Kind::zero;
    return f;
  }
  if (family == "clipped-terminal-sq") {
    f.kind = PathFunctional::Kind::clipped_terminal_sq;
    return f;
  }
  if (family == "escape-reward") {
    f.kind = PathFunctional::Kind::escape_reward;
    return f;
  }
  ctx.fail(path + ".family", "unknown functional family '" + family + "'");
  return std::nullopt;
}

std::optional<RateTargetSpec> parse_rate_target(const json& j,
                                                const std::string& path,
                                                int dim, const Ctx& ctx) {
  if (!j.is_object()) {
    ctx.fail(path, "expected an object");
    return std::nullopt;
  }
  RateTargetSpec spec;
  const std::string kind = get_string(j, path, "kind", "", ctx, true);
  if (kind == "path") {
    check_keys(j, path, {"kind", "csv"}, ctx);
    spec.kind = RateTargetSpec::Kind::path_csv;
    spec.csv_path = get_string(j, path, "csv", "", ctx, true);
    return spec;
  }
  if (kind == "terminal-halfspace") {
    check_keys(j, path, {"kind", "normal", "offset"}, ctx);
    spec.kind = RateTargetSpec::Kind::terminal_halfspace;
    spec.normal = get_vector(j, path, "normal", ctx, true);
    spec.offset = get_number(j, path, "offset", 0.0, ctx, true);
    if (int(spec.normal.size()) != dim)
      ctx.fail(path + ".normal", "dimension mismatch");
    return spec;
  }
  if (kind == "terminal-ball") {
    check_keys(j, path, {"kind", "center", "radius"}, ctx);
    spec.kind = RateTargetSpec::Kind::terminal_ball;
    spec.center = get_vector(j, path, "center", ctx, true);
    spec.radius = get_number(j, path, "radius", 1.0, ctx, true);
    return spec;
  }
  if (kind == "tube") {
    check_keys(j, path, {"kind", "radius", "center"}, ctx);
    spec.kind = RateTargetSpec::Kind::tube;
    spec.radius = get_number(j, path, "radius", 0.1, ctx, true);
    spec.tube_center = get_string(j, path, "center", "limit", ctx);
    return spec;
  }
  ctx.fail(path + ".kind", "unknown target kind '" + kind + "'");
  return std::nullopt;
}

// --- canonical echo ----------------------------------------------------------

ordered_json domain_echo(const ConvexDomain& d) {
  ordered_json j;
  switch (d.kind()) {
    case DomainKind::whole_space:
      j["kind"] = "whole-space";
      break;
    case DomainKind::half_space:
      j["kind"] = "half-space";
      j["normal"] = d.face_normals()[0];
      j["offset"] = d.face_offsets()[0];
      break;
    case DomainKind::box: {
      j["kind"] = "box";
      ordered_json lo = ordered_json::array(), hi = ordered_json::array();
      for (double v : d.box_lower())
        lo.push_back(std::isinf(v) ? ordered_json("-inf") : ordered_json(v));
      for (double v : d.box_upper())
        hi.push_back(std::isinf(v) ? ordered_json("inf") : ordered_json(v));
      j["lower"] = lo;
      j["upper"] = hi;
      break;
    }
    case DomainKind::ball:
      j["kind"] = "ball";
      j["center"] = d.ball_center();
      j["radius"] = d.ball_radius();
      break;
    case DomainKind::polyhedron:
      j["kind"] = "polyhedron";
      j["normals"] = d.face_normals();
      j["offsets"] = d.face_offsets();
      j["interior_point"] = d.interior_point();
      break;
  }
  return j;
}

}  // namespace

std::string canonical_hash(const ordered_json& canonical) {
  ordered_json scrubbed = canonical;
  scrubbed.erase("threads");
  if (scrubbed.contains("output")) scrubbed["output"].erase("directory");
  return fnv1a_hex(scrubbed.dump());
}

void register_custom_drift(const std::string& name, DriftFactory factory) {
  std::lock_guard<std::mutex> lock(registry().mutex);
  registry().drifts[name] = std::move(factory);
}

void register_custom_diffusion(const std::string& name, DiffusionFactory factory) {
  std::lock_guard<std::mutex> lock(registry().mutex);
  registry().diffusions[name] = std::move(factory);
}

ParseResult parse_config(const std::string& text) {
  ParseResult result;
  Ctx ctx{&result.errors};

  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) {
    ctx.fail("$", "invalid JSON");
    return result;
  }
  if (!root.is_object()) {
    ctx.fail("$", "top level must be an object");
    return result;
  }
  check_keys(root, "$", {"seed", "threads", "scenario", "experiment", "output"},
             ctx);

  Config cfg;
  cfg.seed = std::uint64_t(get_integer(root, "$", "seed", 0, ctx));
  cfg.threads = int(get_integer(root, "$", "threads", 0, ctx));

  // --- scenario
  if (!root.contains("scenario") || !root["scenario"].is_object()) {
    ctx.fail("$.scenario", "missing required object");
    return result;
  }
  const json& sj = root["scenario"];
  check_keys(sj, "$.scenario",
             {"dim", "operator", "coefficients", "h", "horizon", "dt",
              "particles", "replicas"},
             ctx);
  const int dim = int(get_integer(sj, "$.scenario", "dim", 1, ctx, true));
  if (dim < 1) {
    ctx.fail("$.scenario.dim", "must be >= 1");
    return result;
  }
  const double horizon = get_number(sj, "$.scenario", "horizon", 1.0, ctx);
  const double dt = get_number(sj, "$.scenario", "dt", 1e-3, ctx);
  if (!(horizon > 0.0)) ctx.fail("$.scenario.horizon", "must be positive");
  if (!(dt > 0.0 && dt <= horizon)) ctx.fail("$.scenario.dt", "must lie in (0, horizon]");
  const long steps = std::lround(horizon / std::max(dt, 1e-300));

  Scenario sc;
  sc.coeffs.dim = dim;
  if (!result.errors.empty() && (!(horizon > 0) || !(dt > 0))) return result;
  sc.grid = TimeGrid(horizon, int(std::max(1l, steps)));
  sc.particles = int(get_integer(sj, "$.scenario", "particles", 1000, ctx));
  sc.replicas = get_integer(sj, "$.scenario", "replicas", 100, ctx);
  sc.seed = cfg.seed;
  sc.start = get_vector(sj, "$.scenario", "h", ctx, true);
  if (int(sc.start.size()) != dim)
    ctx.fail("$.scenario.h", "dimension mismatch with scenario.dim");

  if (sj.contains("operator")) {
    auto op = parse_operator(sj["operator"], "$.scenario.operator", dim, ctx);
    if (op) sc.op = std::move(*op);
  } else {
    sc.op = MonotoneOperator::zero(dim);
  }

  json cj = sj.contains("coefficients") ? sj["coefficients"] : json::object();
  check_keys(cj, "$.scenario.coefficients",
             {"drift", "sigma", "one_sided_lipschitz", "growth_exponent",
              "jacobian", "perturbation"},
             ctx);
  DriftParse drift{drift_zero(dim), jacobian_constant(dim, 0.0)};
  if (cj.contains("drift")) {
    auto d = parse_drift(cj["drift"], "$.scenario.coefficients.drift", dim, ctx);
    if (d) drift = std::move(*d);
  }
  DiffusionFn sigma = diffusion_scalar(dim, 1.0);
  if (cj.contains("sigma")) {
    auto s = parse_sigma(cj["sigma"], "$.scenario.coefficients.sigma", dim, ctx);
    if (s) sigma = std::move(*s);
  }
  sc.coeffs.drift = drift.fn;
  sc.coeffs.diffusion = sigma;
  sc.coeffs.one_sided_lipschitz =
      get_number(cj, "$.scenario.coefficients", "one_sided_lipschitz", 0.0, ctx);
  sc.coeffs.growth_exponent =
      get_number(cj, "$.scenario.coefficients", "growth_exponent", 1.0, ctx);

  std::string jac_mode = "auto";
  double jac_step = 1e-5;
  if (cj.contains("jacobian")) {
    const json& jj = cj["jacobian"];
    check_keys(jj, "$.scenario.coefficients.jacobian", {"mode", "step"}, ctx);
    jac_mode = get_string(jj, "$.scenario.coefficients.jacobian", "mode", "auto", ctx);
    jac_step = get_number(jj, "$.scenario.coefficients.jacobian", "step", 1e-5, ctx);
    if (jac_mode != "auto" && jac_mode != "analytic" && jac_mode != "fd")
      ctx.fail("$.scenario.coefficients.jacobian.mode",
               "expected auto, analytic or fd");
  }
  if (jac_mode == "analytic" && !drift.jacobian)
    ctx.fail("$.scenario.coefficients.jacobian.mode",
             "drift family has no analytic derivative");
  if (jac_mode != "fd" && drift.jacobian)
    sc.coeffs.drift_jacobian = drift.jacobian;

  RhoFn rho_b = rho_zero(), rho_s = rho_zero();
  std::vector<double> pert_dir;
  bool has_pert = false;
  ordered_json pert_echo;
  if (cj.contains("perturbation")) {
    const json& pj = cj["perturbation"];
    check_keys(pj, "$.scenario.coefficients.perturbation",
               {"rho_b", "rho_sigma", "direction"}, ctx);
    if (pj.contains("rho_b"))
      rho_b = parse_rho(pj["rho_b"], "$.scenario.coefficients.perturbation.rho_b", ctx);
    if (pj.contains("rho_sigma"))
      rho_s = parse_rho(pj["rho_sigma"],
                        "$.scenario.coefficients.perturbation.rho_sigma", ctx);
    pert_dir = get_vector(pj, "$.scenario.coefficients.perturbation",
                          "direction", ctx);
    has_pert = true;
    pert_echo = ordered_json(pj);
  }

  if (!result.errors.empty()) return result;

  try {
    sc.coeffs.finalize();
    if (has_pert) attach_uniform_perturbation(sc.coeffs, rho_b, rho_s, pert_dir);
    sc.validate();
  } catch (const std::exception& e) {
    ctx.fail("$.scenario.h", e.what());
    return result;
  }
  cfg.scenario = std::move(sc);

  // --- experiment
  if (!root.contains("experiment") || !root["experiment"].is_object()) {
    ctx.fail("$.experiment", "missing required object");
    return result;
  }
  const json& ej = root["experiment"];
  cfg.kind = get_string(ej, "$.experiment", "kind", "", ctx, true);
  const std::string ep = "$.experiment";
  auto scan_epsilons = [&]() {
    cfg.epsilons = get_vector(ej, ep, "epsilons", ctx, true);
    for (double e : cfg.epsilons)
      if (!(e > 0.0 && e <= 1.0)) {
        ctx.fail(ep + ".epsilons", "epsilon values must lie in (0, 1]");
        break;
      }
    for (std::size_t i = 1; i < cfg.epsilons.size(); ++i)
      if (!(cfg.epsilons[i] < cfg.epsilons[i - 1])) {
        ctx.fail(ep + ".epsilons", "grid must be strictly decreasing");
        break;
      }
  };

  if (cfg.kind == "limit") {
    check_keys(ej, ep, {"kind"}, ctx);
  } else if (cfg.kind == "simulate") {
    check_keys(ej, ep, {"kind", "epsilon", "store_replicas"}, ctx);
    cfg.epsilon = get_number(ej, ep, "epsilon", 0.5, ctx, true);
    cfg.store_replicas = get_integer(ej, ep, "store_replicas", 1, ctx);
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0))
      ctx.fail(ep + ".epsilon", "must lie in [0, 1]");
  } else if (cfg.kind == "skeleton" || cfg.kind == "mdp-skeleton") {
    check_keys(ej, ep, {"kind", "control"}, ctx);
    if (!ej.contains("control")) {
      ctx.fail(ep + ".control", "missing required key");
    } else {
      auto spec = parse_control(ej["control"], ep + ".control", ctx);
      if (spec) cfg.control = std::move(*spec);
    }
  } else if (cfg.kind == "rate") {
    check_keys(ej, ep, {"kind", "regime", "target"}, ctx);
    cfg.rate_regime = get_string(ej, ep, "regime", "ldp", ctx);
    if (cfg.rate_regime != "ldp" && cfg.rate_regime != "mdp")
      ctx.fail(ep + ".regime", "expected ldp or mdp");
    if (!ej.contains("target")) {
      ctx.fail(ep + ".target", "missing required key");
    } else {
      auto spec = parse_rate_target(ej["target"], ep + ".target", dim, ctx);
      if (spec) cfg.rate_target = std::move(*spec);
    }
  } else if (cfg.kind == "ldp" || cfg.kind == "mdp") {
    check_keys(ej, ep,
               {"kind", "epsilons", "event", "tolerance", "lambda_exponent",
                "audit"},
               ctx);
    scan_epsilons();
    if (!ej.contains("event")) {
      ctx.fail(ep + ".event", "missing required key");
    } else {
      auto ev = parse_event(ej["event"], ep + ".event", dim, ctx);
      if (ev) cfg.event = std::move(*ev);
    }
    cfg.tolerance = get_number(ej, ep, "tolerance", 0.1, ctx);
    cfg.audit = get_bool(ej, ep, "audit", false, ctx);
    if (cfg.kind == "mdp") {
      cfg.lambda_exponent = get_number(ej, ep, "lambda_exponent", 0.25, ctx);
      if (!(cfg.lambda_exponent > 0.0 && cfg.lambda_exponent < 0.5))
        ctx.fail(ep + ".lambda_exponent", "must lie in (0, 1/2)");
    } else if (ej.contains("lambda_exponent")) {
      ctx.fail(ep + ".lambda_exponent", "only valid for mdp scans");
    }
  } else if (cfg.kind == "laplace") {
    check_keys(ej, ep, {"kind", "epsilons", "functional", "tolerance", "audit"},
               ctx);
    scan_epsilons();
    if (!ej.contains("functional")) {
      ctx.fail(ep + ".functional", "missing required key");
    } else {
      auto f = parse_functional(ej["functional"], ep + ".functional", ctx);
      if (f) cfg.functional = std::move(*f);
    }
    cfg.tolerance = get_number(ej, ep, "tolerance", 0.1, ctx);
    cfg.audit = get_bool(ej, ep, "audit", false, ctx);
  } else if (cfg.kind == "converge") {
    check_keys(ej, ep, {"kind", "epsilons", "slope_band", "audit"}, ctx);
    scan_epsilons();
    auto band = get_vector(ej, ep, "slope_band", ctx);
    if (!band.empty()) {
      if (band.size() != 2 || !(band[0] < band[1]))
        ctx.fail(ep + ".slope_band", "expected [low, high] with low < high");
      else
        cfg.slope_band = {band[0], band[1]};
    }
    cfg.audit = get_bool(ej, ep, "audit", false, ctx);
  } else {
    ctx.fail(ep + ".kind", "unknown experiment kind '" + cfg.kind + "'");
  }

  // --- output
  if (root.contains("output")) {
    const json& oj = root["output"];
    check_keys(oj, "$.output", {"directory", "create", "formats"}, ctx);
    cfg.out_dir = get_string(oj, "$.output", "directory", "out", ctx);
    cfg.create_dir = get_bool(oj, "$.output", "create", true, ctx);
    if (oj.contains("formats")) {
      cfg.formats.clear();
      if (!oj["formats"].is_array()) {
        ctx.fail("$.output.formats", "expected an array");
      } else {
        for (const auto& f : oj["formats"]) {
          const std::string s = f.is_string() ? f.get<std::string>() : "";
          if (s != "csv" && s != "json" && s != "bin")
            ctx.fail("$.output.formats", "expected csv, json or bin entries");
          else
            cfg.formats.push_back(s);
        }
      }
    }
  }

  if (!result.errors.empty()) return result;

  // --- canonical echo with every default materialized
  ordered_json canon;
  canon["seed"] = cfg.seed;
  canon["threads"] = cfg.threads;
  ordered_json cscen;
  cscen["dim"] = dim;
  cscen["operator"] = [&] {
    ordered_json oj2;
    switch (cfg.scenario.op.kind()) {
      case OperatorKind::zero:
        oj2["kind"] = "zero";
        break;
      case OperatorKind::indicator:
        oj2["kind"] = "indicator";
        oj2["domain"] = domain_echo(cfg.scenario.op.domain());
        break;
      case OperatorKind::linear:
        oj2["kind"] = "linear";
        oj2["matrix"] = cfg.scenario.op.matrix();
        break;
      case OperatorKind::sum:
        oj2["kind"] = "sum";
        oj2["domain"] = domain_echo(cfg.scenario.op.domain());
        oj2["matrix"] = cfg.scenario.op.matrix();
        break;
    }
    return oj2;
  }();
  ordered_json ccoef;
  ccoef["drift"] = cj.contains("drift") ? ordered_json(cj["drift"])
                                        : ordered_json{{"family", "zero"}};
  ccoef["sigma"] = cj.contains("sigma")
                       ? ordered_json(cj["sigma"])
                       : ordered_json{{"family", "constant"}, {"value", 1.0}};
  ccoef["one_sided_lipschitz"] = cfg.scenario.coeffs.one_sided_lipschitz;
  ccoef["growth_exponent"] = cfg.scenario.coeffs.growth_exponent;
  ccoef["jacobian"] = ordered_json{{"mode", jac_mode}, {"step", jac_step}};
  if (has_pert) ccoef["perturbation"] = pert_echo;
  cscen["coefficients"] = ccoef;
  cscen["h"] = cfg.scenario.start;
  cscen["horizon"] = cfg.scenario.grid.horizon;
  cscen["dt"] = cfg.scenario.grid.dt();
  cscen["steps"] = cfg.scenario.grid.steps;
  cscen["particles"] = cfg.scenario.particles;
  cscen["replicas"] = cfg.scenario.replicas;
  canon["scenario"] = cscen;
  canon["experiment"] = ordered_json(ej);
  ordered_json cout;
  cout["directory"] = cfg.out_dir;
  cout["create"] = cfg.create_dir;
  cout["formats"] = cfg.formats;
  canon["output"] = cout;
  cfg.canonical = canon;
  cfg.config_hash = canonical_hash(canon);

  result.config = std::move(cfg);
  return result;
}

ExperimentPlan Config::to_plan() const {
  ExperimentPlan plan;
  plan.scenario = scenario;
  plan.epsilons = epsilons;
  plan.lambda_exponent = lambda_exponent;
  plan.event = event;
  plan.replicas_per_eps = scenario.replicas;
  plan.seed = seed;
  plan.output_directory = out_dir;
  plan.tolerance = tolerance;
  plan.slope_band = slope_band;
  plan.threads = threads;
  plan.audit = audit;
  return plan;
}

}  // namespace mvsde
