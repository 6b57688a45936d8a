#include "mvsde/rate.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mvsde {

RateTarget RateTarget::for_path(SamplePath g) {
  RateTarget t;
  t.kind = Kind::path;
  t.path = std::move(g);
  return t;
}

RateTarget RateTarget::terminal_halfspace(std::vector<double> normal, double offset) {
  if (normal.empty() || norm(normal) == 0.0)
    throw ConfigError("rate target: zero normal");
  RateTarget t;
  t.kind = Kind::terminal_halfspace;
  t.normal = std::move(normal);
  t.offset = offset;
  return t;
}

RateTarget RateTarget::terminal_ball(std::vector<double> center, double radius) {
  if (!(radius >= 0.0)) throw ConfigError("rate target: negative radius");
  RateTarget t;
  t.kind = Kind::terminal_ball;
  t.center = std::move(center);
  t.radius = radius;
  return t;
}

RateTarget RateTarget::tube(SamplePath center, double radius) {
  if (!(radius > 0.0)) throw ConfigError("rate target: tube radius must be positive");
  RateTarget t;
  t.kind = Kind::tube;
  t.path = std::move(center);
  t.radius = radius;
  return t;
}

double control_energy(const ControlPath& u) { return u.energy(); }

namespace {

// Node derivative: central in the interior, second-order one-sided at the
// ends.
std::vector<double> node_derivative(const SamplePath& g) {
  const int n = g.grid().nodes();
  const int d = g.dim();
  const double dt = g.grid().dt();
  std::vector<double> out(std::size_t(n) * d);
  for (int k = 0; k < d; ++k) {
    out[k] = (-3.0 * g.at(0, k) + 4.0 * g.at(1, k) - g.at(2, k)) / (2.0 * dt);
    out[std::size_t(n - 1) * d + k] =
        (3.0 * g.at(n - 1, k) - 4.0 * g.at(n - 2, k) + g.at(n - 3, k)) /
        (2.0 * dt);
  }
  for (int i = 1; i + 1 < n; ++i)
    for (int k = 0; k < d; ++k)
      out[std::size_t(i) * d + k] =
          (g.at(i + 1, k) - g.at(i - 1, k)) / (2.0 * dt);
  return out;
}

// Inverts sigma * u = rhs per node, builds the cell control by midpoint
// averaging of node values, so value == control.energy() exactly.
RateResult invert_nodes(const Scenario& sc, const SamplePath& g,
                        const std::function<void(int, MutVecView)>& sigma_at,
                        const std::function<void(int, VecView, MutVecView)>& drift_at,
                        const RateOptions& opt, bool mdp,
                        const JacobianField* jac) {
  const int d = sc.coeffs.dim;
  const int n = sc.grid.nodes();
  const double dt = sc.grid.dt();
  if (n < 3) throw ConfigError("rate: grid too coarse for derivatives");

  const std::vector<double> gdot = node_derivative(g);
  std::vector<double> u_nodes(std::size_t(n) * d);
  std::vector<double> sig(std::size_t(d) * d), rhs(d), bval(d);
  std::vector<int> piv;
  for (int i = 0; i < n; ++i) {
    if (sc.op.constrained()) {
      const double m = sc.op.domain().margin(g.value(i));
      if (m < opt.interior_margin)
        throw BoundaryContactError(
            "rate: path touches the domain boundary at node " +
            std::to_string(i) + "; use rate_optimize");
    }
    sigma_at(i, sig);
    const double cond = condition_number_1(sig, d);
    if (!(cond <= opt.condition_cap))
      throw NumericalError("rate: diffusion singular or ill-conditioned at node " +
                               std::to_string(i),
                           cond);
    drift_at(i, g.value(i), bval);
    for (int k = 0; k < d; ++k)
      rhs[k] = gdot[std::size_t(i) * d + k] - bval[k];
    std::vector<double> lu = sig;
    lu_factor(lu, d, piv);
    lu_solve(lu, piv, d, rhs);
    for (int k = 0; k < d; ++k) u_nodes[std::size_t(i) * d + k] = rhs[k];
  }

  RateResult res;
  res.control = ControlPath(sc.grid, d);
  for (int i = 0; i < sc.grid.steps; ++i)
    for (int k = 0; k < d; ++k)
      res.control.at(i, k) = 0.5 * (u_nodes[std::size_t(i) * d + k] +
                                    u_nodes[std::size_t(i + 1) * d + k]);
  res.value = res.control.energy();
  res.certified = true;
  res.converged = true;
  const PathPair achieved = mdp ? solve_mdp_skeleton(sc, res.control, *jac)
                                : solve_skeleton(sc, res.control);
  res.trajectory = achieved.state;
  res.constraint_residual = res.trajectory.sup_distance(g);
  (void)dt;
  return res;
}

}  // namespace

RateResult rate_of_path(const Scenario& sc, const SamplePath& g,
                        const RateOptions& opt) {
  if (!(g.grid() == sc.grid) || g.dim() != sc.coeffs.dim)
    throw ConfigError("rate: path does not match the scenario grid");
  {
    std::vector<double> d0(g.value(0).begin(), g.value(0).end());
    for (int k = 0; k < sc.coeffs.dim; ++k) d0[k] -= sc.start[k];
    if (norm(d0) > opt.start_tol)
      throw ConfigError("rate: path must start at the scenario start point");
  }
  const PathPair limit = solve_limit(sc);
  const SamplePath& x0 = limit.state;
  auto sigma_at = [&](int i, MutVecView out) {
    const auto c = x0.value(std::min(i, sc.grid.steps));
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    sc.coeffs.diffusion(g.value(i), mu, out);
  };
  auto drift_at = [&](int i, VecView y, MutVecView out) {
    const auto c = x0.value(std::min(i, sc.grid.steps));
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    sc.coeffs.drift(y, mu, out);
  };
  return invert_nodes(sc, g, sigma_at, drift_at, opt, false, nullptr);
}

RateResult mdp_rate_of_path(const Scenario& sc, const SamplePath& g,
                            const JacobianField& jac, const RateOptions& opt) {
  if (!(g.grid() == sc.grid) || g.dim() != sc.coeffs.dim)
    throw ConfigError("rate: path does not match the scenario grid");
  if (norm(g.value(0)) > opt.start_tol)
    throw ConfigError("mdp rate: path must start at the origin");
  const PathPair limit = solve_limit(sc);
  const SamplePath& x0 = limit.state;
  const int d = sc.coeffs.dim;
  std::vector<double> jbuf(std::size_t(d) * d);
  auto sigma_at = [&](int i, MutVecView out) {
    const auto c = x0.value(std::min(i, sc.grid.steps));
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    sc.coeffs.diffusion(c, mu, out);
  };
  auto drift_at = [&](int i, VecView y, MutVecView out) {
    const auto c = x0.value(std::min(i, sc.grid.steps));
    const LawProbe mu = dirac_probe(c, norm_sq(c));
    jac.eval(c, mu, jbuf);
    matvec(jbuf, d, y, out);
  };
  return invert_nodes(sc, g, sigma_at, drift_at, opt, true, &jac);
}

namespace {

struct CoarseMap {
  int cells = 1;
  int dim = 1;
  std::vector<int> counts;  // fine cells per coarse cell
  TimeGrid grid;

  CoarseMap(TimeGrid g, int dim_in, int cells_in) : grid(g) {
    dim = dim_in;
    cells = std::max(1, std::min(cells_in, g.steps));
    counts.assign(cells, 0);
    for (int i = 0; i < g.steps; ++i) ++counts[coarse_index(i)];
  }
  int coarse_index(int fine) const {
    return int((long(fine) * cells) / grid.steps);
  }
  ControlPath prolong(VecView coarse) const {
    ControlPath u(grid, dim);
    for (int i = 0; i < grid.steps; ++i) {
      const int c = coarse_index(i);
      for (int k = 0; k < dim; ++k)
        u.at(i, k) = coarse[std::size_t(c) * dim + k];
    }
    return u;
  }
  double energy(VecView coarse) const {
    const double dt = grid.dt();
    double s = 0.0;
    for (int c = 0; c < cells; ++c) {
      double nn = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double v = coarse[std::size_t(c) * dim + k];
        nn += v * v;
      }
      s += counts[c] * dt * nn;
    }
    return 0.5 * s;
  }
};

struct DescentOutcome {
  std::vector<double> point;
  double value = 0.0;
  int iterations = 0;
};

// Gradient descent with forward-difference gradients, Barzilai-Borwein step
// and Armijo backtracking.
DescentOutcome descend(const std::function<double(VecView)>& f,
                       std::vector<double> x, int max_iter) {
  const std::size_t n = x.size();
  DescentOutcome out;
  double fx = f(x);
  std::vector<double> g(n), gprev(n), xprev(n), trial(n);
  double alpha = 0.1;
  int evals_iter = 0;
  for (int it = 0; it < max_iter; ++it) {
    ++evals_iter;
    // forward-difference gradient
    double gnorm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = 1e-6 * (1.0 + std::fabs(x[i]));
      const double saved = x[i];
      x[i] = saved + h;
      const double fp = f(x);
      x[i] = saved;
      g[i] = (fp - fx) / h;
      gnorm2 += g[i] * g[i];
    }
    if (gnorm2 <= 1e-18 * (1.0 + fx * fx)) break;
    if (it > 0) {
      double sy = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = x[i] - xprev[i];
        const double y = g[i] - gprev[i];
        sy += s * y;
        ss += s * s;
      }
      if (sy > 1e-30) alpha = std::min(10.0, std::max(1e-8, ss / sy));
    }
    xprev = x;
    gprev = g;
    bool accepted = false;
    double a = alpha;
    for (int bt = 0; bt < 40; ++bt) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - a * g[i];
      const double ft = f(trial);
      if (ft <= fx - 1e-4 * a * gnorm2) {
        x = trial;
        fx = ft;
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    if (!accepted) break;
    const double step2 = a * a * gnorm2;
    if (step2 <= 1e-24 * (1.0 + norm_sq(x))) break;
  }
  out.point = std::move(x);
  out.value = fx;
  out.iterations = evals_iter;
  return out;
}

double target_violation(const RateTarget& target, const SamplePath& y) {
  switch (target.kind) {
    case RateTarget::Kind::path:
      return y.sup_distance(target.path);
    case RateTarget::Kind::terminal_halfspace: {
      const auto xT = y.value(y.grid().steps);
      return std::max(0.0, target.offset - dot(target.normal, xT));
    }
    case RateTarget::Kind::terminal_ball: {
      const auto xT = y.value(y.grid().steps);
      const double dist = std::sqrt(dist_sq(xT, target.center));
      return std::max(0.0, dist - target.radius);
    }
    case RateTarget::Kind::tube:
      return std::max(0.0, y.sup_distance(target.path) - target.radius);
  }
  return 0.0;
}

void check_target(const Scenario& sc, const RateTarget& target) {
  const bool has_path = target.kind == RateTarget::Kind::path ||
                        target.kind == RateTarget::Kind::tube;
  if (has_path &&
      (!(target.path.grid() == sc.grid) || target.path.dim() != sc.coeffs.dim))
    throw ConfigError("rate target: path does not match the scenario grid");
  if (target.kind == RateTarget::Kind::terminal_halfspace &&
      target.normal.size() != std::size_t(sc.coeffs.dim))
    throw ConfigError("rate target: normal dimension mismatch");
  if (target.kind == RateTarget::Kind::terminal_ball &&
      target.center.size() != std::size_t(sc.coeffs.dim))
    throw ConfigError("rate target: center dimension mismatch");
}

}  // namespace

RateResult rate_optimize(const Scenario& sc, const RateQuery& query,
                         const RateOptions& opt) {
  check_target(sc, query.target);
  const bool mdp = query.regime == RateRegime::mdp;
  JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
  const CoarseMap map(sc.grid, sc.coeffs.dim, opt.coarse_cells);
  const std::size_t nvar = std::size_t(map.cells) * map.dim;

  auto solve_for = [&](const ControlPath& u) {
    return mdp ? solve_mdp_skeleton(sc, u, jac) : solve_skeleton(sc, u);
  };

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 0.5);
  std::vector<std::vector<double>> starts;
  starts.emplace_back(nvar, 0.0);
  for (int r = 0; r < opt.restarts; ++r) {
    std::vector<double> s(nvar);
    for (auto& v : s) v = gauss(rng);
    starts.push_back(std::move(s));
  }

  RateResult best;
  bool have_best = false;
  int total_iters = 0;
  for (const auto& start : starts) {
    std::vector<double> x = start;
    double mu = opt.penalty_init;
    double violation = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opt.max_outer; ++round) {
      auto objective = [&](VecView coarse) {
        const ControlPath u = map.prolong(coarse);
        const PathPair sol = solve_for(u);
        const double v = target_violation(query.target, sol.state);
        return map.energy(coarse) + mu * v * v;
      };
      DescentOutcome o = descend(objective, x, opt.max_inner);
      x = o.point;
      total_iters += o.iterations;
      const ControlPath u = map.prolong(x);
      violation = target_violation(query.target, solve_for(u).state);
      if (violation <= opt.residual_tol) break;
      mu *= opt.penalty_growth;
    }
    ControlPath u = map.prolong(x);
    PathPair sol = solve_for(u);
    RateResult cand;
    cand.control = std::move(u);
    cand.value = cand.control.energy();
    cand.trajectory = std::move(sol.state);
    cand.constraint_residual = violation;
    cand.converged = violation <= opt.residual_tol;
    cand.certified = false;
    const bool better =
        !have_best ||
        (cand.converged && !best.converged) ||
        (cand.converged == best.converged &&
         (cand.converged ? cand.value < best.value
                         : cand.constraint_residual < best.constraint_residual));
    if (better) {
      best = std::move(cand);
      have_best = true;
    }
  }
  best.iterations = total_iters;
  return best;
}

RateResult evaluate_rate(const Scenario& sc, const RateQuery& query,
                         const RateOptions& opt) {
  if (query.target.kind == RateTarget::Kind::path) {
    try {
      if (query.regime == RateRegime::mdp) {
        JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
        return mdp_rate_of_path(sc, query.target.path, jac, opt);
      }
      return rate_of_path(sc, query.target.path, opt);
    } catch (const BoundaryContactError&) {
      // fall through to the optimizer
    }
  }
  return rate_optimize(sc, query, opt);
}

RateResult minimize_path_functional(
    const Scenario& sc, const std::function<double(const SamplePath&)>& f,
    const RateOptions& opt) {
  const CoarseMap map(sc.grid, sc.coeffs.dim, opt.coarse_cells);
  const std::size_t nvar = std::size_t(map.cells) * map.dim;

  auto objective = [&](VecView coarse) {
    const ControlPath u = map.prolong(coarse);
    const PathPair sol = solve_skeleton(sc, u);
    return map.energy(coarse) + f(sol.state);
  };

  std::vector<double> amplitudes = {0.0, 0.5, -0.5, 1.0, -1.0};
  RateResult best;
  bool have_best = false;
  int total_iters = 0;
  for (double a : amplitudes) {
    std::vector<double> x(nvar, 0.0);
    for (int c = 0; c < map.cells; ++c) x[std::size_t(c) * map.dim] = a;
    DescentOutcome o = descend(objective, std::move(x), opt.max_inner);
    total_iters += o.iterations;
    if (!have_best || o.value < best.value) {
      ControlPath u = map.prolong(o.point);
      PathPair sol = solve_skeleton(sc, u);
      best.value = o.value;  // f(Y^u) + energy(u)
      best.control = std::move(u);
      best.trajectory = std::move(sol.state);
      best.converged = true;
      best.certified = false;
      have_best = true;
    }
  }
  best.iterations = total_iters;
  return best;
}

}  // namespace mvsde
