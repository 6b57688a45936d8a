#include "mvsde/monotone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mvsde {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dim(std::size_t got, int want, const char* what) {
  if (got != std::size_t(want)) throw ConfigError(std::string(what) + ": dimension mismatch");
}
}  // namespace

ConvexDomain ConvexDomain::whole_space(int dim) {
  if (dim < 1) throw ConfigError("domain: dimension must be >= 1");
  ConvexDomain d;
  d.kind_ = DomainKind::whole_space;
  d.dim_ = dim;
  d.interior_.assign(dim, 0.0);
  return d;
}

ConvexDomain ConvexDomain::half_space(std::vector<double> normal, double offset) {
  if (normal.empty()) throw ConfigError("half-space: empty normal");
  const double n = norm(normal);
  if (n == 0.0) throw ConfigError("half-space: zero normal");
  for (double& v : normal) v /= n;
  ConvexDomain d;
  d.kind_ = DomainKind::half_space;
  d.dim_ = int(normal.size());
  d.offsets_ = {offset / n};
  d.normals_ = {std::move(normal)};
  d.interior_.assign(d.dim_, 0.0);
  for (int j = 0; j < d.dim_; ++j)
    d.interior_[j] = (d.offsets_[0] - 1.0) * d.normals_[0][j];
  return d;
}

ConvexDomain ConvexDomain::box(std::vector<double> lower, std::vector<double> upper) {
  if (lower.size() != upper.size() || lower.empty())
    throw ConfigError("box: lower/upper size mismatch");
  for (std::size_t j = 0; j < lower.size(); ++j) {
    if (std::isnan(lower[j]) || std::isnan(upper[j]))
      throw ConfigError("box: NaN bound");
    if (!(lower[j] < upper[j]))
      throw ConfigError("box: requires lower < upper in every coordinate");
  }
  ConvexDomain d;
  d.kind_ = DomainKind::box;
  d.dim_ = int(lower.size());
  d.interior_.assign(d.dim_, 0.0);
  for (int j = 0; j < d.dim_; ++j) {
    const double lo = lower[j], hi = upper[j];
    if (std::isfinite(lo) && std::isfinite(hi))
      d.interior_[j] = 0.5 * (lo + hi);
    else if (std::isfinite(lo))
      d.interior_[j] = lo + 1.0;
    else if (std::isfinite(hi))
      d.interior_[j] = hi - 1.0;
    else
      d.interior_[j] = 0.0;
  }
  d.lower_ = std::move(lower);
  d.upper_ = std::move(upper);
  return d;
}

ConvexDomain ConvexDomain::ball(std::vector<double> center, double radius) {
  if (center.empty()) throw ConfigError("ball: empty center");
  if (!(radius > 0.0)) throw ConfigError("ball: radius must be positive");
  ConvexDomain d;
  d.kind_ = DomainKind::ball;
  d.dim_ = int(center.size());
  d.interior_ = center;
  d.center_ = std::move(center);
  d.radius_ = radius;
  return d;
}

ConvexDomain ConvexDomain::polyhedron(std::vector<std::vector<double>> normals,
                                      std::vector<double> offsets,
                                      std::vector<double> interior_point) {
  if (normals.empty() || normals.size() != offsets.size())
    throw ConfigError("polyhedron: inequality list is empty or mismatched");
  const int dim = int(normals[0].size());
  for (auto& nrm : normals) {
    check_dim(nrm.size(), dim, "polyhedron normal");
    const double n = norm(nrm);
    if (n == 0.0) throw ConfigError("polyhedron: zero normal");
  }
  check_dim(interior_point.size(), dim, "polyhedron interior point");
  ConvexDomain d;
  d.kind_ = DomainKind::polyhedron;
  d.dim_ = dim;
  d.normals_ = std::move(normals);
  d.offsets_ = std::move(offsets);
  d.interior_ = std::move(interior_point);
  if (d.margin(d.interior_) < kInteriorMargin)
    throw ConfigError(
        "polyhedron: interior witness violates a face (empty or degenerate "
        "domain)");
  return d;
}

double ConvexDomain::margin(VecView x) const {
  switch (kind_) {
    case DomainKind::whole_space:
      return kInf;
    case DomainKind::half_space:
      return offsets_[0] - dot(normals_[0], x);
    case DomainKind::box: {
      double m = kInf;
      for (int j = 0; j < dim_; ++j) {
        if (std::isfinite(lower_[j])) m = std::min(m, x[j] - lower_[j]);
        if (std::isfinite(upper_[j])) m = std::min(m, upper_[j] - x[j]);
      }
      return m;
    }
    case DomainKind::ball: {
      return radius_ - std::sqrt(dist_sq(x, center_));
    }
    case DomainKind::polyhedron: {
      double m = kInf;
      for (std::size_t i = 0; i < normals_.size(); ++i) {
        const double ni = norm(normals_[i]);
        m = std::min(m, (offsets_[i] - dot(normals_[i], x)) / ni);
      }
      return m;
    }
  }
  return kInf;
}

void ConvexDomain::project(VecView p, MutVecView out) const {
  check_dim(p.size(), dim_, "project");
  switch (kind_) {
    case DomainKind::whole_space: {
      std::copy(p.begin(), p.end(), out.begin());
      return;
    }
    case DomainKind::half_space: {
      std::copy(p.begin(), p.end(), out.begin());
      // fp fix-up loop so that contains(out, 0) holds exactly; the boost
      // breaks ulp-level stalls of the correction
      double boost = 1.0;
      double excess = dot(normals_[0], out) - offsets_[0];
      for (int pass = 0; pass < 64 && excess > 0.0; ++pass) {
        for (int j = 0; j < dim_; ++j) out[j] -= boost * excess * normals_[0][j];
        const double next = dot(normals_[0], out) - offsets_[0];
        if (next >= excess) boost *= 2.0;
        excess = next;
      }
      return;
    }
    case DomainKind::box: {
      for (int j = 0; j < dim_; ++j) {
        double v = p[j];
        if (v < lower_[j]) v = lower_[j];
        if (v > upper_[j]) v = upper_[j];
        out[j] = v == 0.0 ? 0.0 : v;  // canonicalize -0.0
      }
      return;
    }
    case DomainKind::ball: {
      const double dist = std::sqrt(dist_sq(p, center_));
      if (dist <= radius_) {
        std::copy(p.begin(), p.end(), out.begin());
        return;
      }
      double scale = radius_ / dist;
      for (int pass = 0; pass < 64; ++pass) {
        for (int j = 0; j < dim_; ++j)
          out[j] = center_[j] + scale * (p[j] - center_[j]);
        const double r = std::sqrt(dist_sq(out, center_));
        if (r <= radius_) break;
        const double shrink = radius_ / r;
        const double next = scale * (shrink < 1.0 ? shrink : 1.0);
        scale = next < scale ? next : std::nextafter(scale, 0.0);
      }
      return;
    }
    case DomainKind::polyhedron: {
      // Dykstra's alternating projections onto the faces.
      const int m = int(normals_.size());
      std::vector<double> x(p.begin(), p.end());
      std::vector<double> corr(std::size_t(m) * dim_, 0.0);
      std::vector<double> y(dim_);
      const double scale = 1.0 + norm(p);
      bool converged = false;
      for (int sweep = 0; sweep < 10000; ++sweep) {
        double moved = 0.0;
        for (int i = 0; i < m; ++i) {
          double* ci = corr.data() + std::size_t(i) * dim_;
          for (int j = 0; j < dim_; ++j) y[j] = x[j] + ci[j];
          const double ni2 = norm_sq(normals_[i]);
          const double excess = dot(normals_[i], y) - offsets_[i];
          for (int j = 0; j < dim_; ++j) {
            const double xj =
                excess > 0.0 ? y[j] - (excess / ni2) * normals_[i][j] : y[j];
            ci[j] = y[j] - xj;
            moved += (xj - x[j]) * (xj - x[j]);
            x[j] = xj;
          }
        }
        if (std::sqrt(moved) <= 1e-12 * scale && margin(x) >= -1e-12 * scale) {
          converged = true;
          break;
        }
      }
      if (!converged)
        throw NumericalError("polyhedron projection: Dykstra did not converge",
                             std::max(0.0, -margin(x)));
      // fp fix-up sweeps so that contains(x, 0) holds exactly; boost only
      // on stalls so the overshoot stays at ulp scale
      double boost = 1.0;
      double prev_margin = margin(x);
      for (int pass = 0; pass < 64 && prev_margin < 0.0; ++pass) {
        for (int i = 0; i < m; ++i) {
          const double ni2 = norm_sq(normals_[i]);
          const double excess = dot(normals_[i], x) - offsets_[i];
          if (excess > 0.0)
            for (int j = 0; j < dim_; ++j)
              x[j] -= boost * (excess / ni2) * normals_[i][j];
        }
        const double next_margin = margin(x);
        boost = next_margin <= prev_margin ? boost * 2.0 : 1.0;
        prev_margin = next_margin;
      }
      std::copy(x.begin(), x.end(), out.begin());
      return;
    }
  }
}

std::vector<double> ConvexDomain::project(VecView p) const {
  std::vector<double> out(dim_);
  project(p, out);
  return out;
}

MonotoneOperator MonotoneOperator::zero(int dim) {
  MonotoneOperator op;
  op.kind_ = OperatorKind::zero;
  op.dim_ = dim;
  op.domain_ = ConvexDomain::whole_space(dim);
  return op;
}

MonotoneOperator MonotoneOperator::indicator(ConvexDomain domain) {
  MonotoneOperator op;
  op.kind_ = OperatorKind::indicator;
  op.dim_ = domain.dim();
  op.domain_ = std::move(domain);
  return op;
}

namespace {
void validate_monotone_matrix(const std::vector<double>& m, int dim) {
  if (m.size() != std::size_t(dim) * dim)
    throw ConfigError("linear operator: matrix must be dim x dim");
  std::vector<double> sym(m.size());
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      sym[std::size_t(i) * dim + j] =
          0.5 * (m[std::size_t(i) * dim + j] + m[std::size_t(j) * dim + i]);
  const double mn = min_symmetric_eigenvalue(sym, dim);
  if (mn < -1e-10 * (1.0 + frobenius_norm(m)))
    throw ConfigError("linear operator: matrix is not positive semidefinite");
}
}  // namespace

MonotoneOperator MonotoneOperator::linear(int dim, std::vector<double> matrix) {
  validate_monotone_matrix(matrix, dim);
  MonotoneOperator op;
  op.kind_ = OperatorKind::linear;
  op.dim_ = dim;
  op.domain_ = ConvexDomain::whole_space(dim);
  op.matrix_ = std::move(matrix);
  return op;
}

MonotoneOperator MonotoneOperator::sum(ConvexDomain domain, std::vector<double> matrix) {
  validate_monotone_matrix(matrix, domain.dim());
  MonotoneOperator op;
  op.kind_ = OperatorKind::sum;
  op.dim_ = domain.dim();
  op.domain_ = std::move(domain);
  op.matrix_ = std::move(matrix);
  return op;
}

ResolventOperator::ResolventOperator(const MonotoneOperator& op, double lambda,
                                     double tol, int max_iter)
    : op_(&op), lambda_(lambda), tol_(tol), max_iter_(max_iter) {
  if (!(lambda > 0.0)) throw ConfigError("resolvent: lambda must be positive");
  const int d = op.dim();
  scratch_.resize(d);
  scratch2_.resize(d);
  if (op.kind() == OperatorKind::linear) {
    lu_ = op.matrix();
    for (auto& v : lu_) v *= lambda;
    for (int i = 0; i < d; ++i) lu_[std::size_t(i) * d + i] += 1.0;
    if (!lu_factor(lu_, d, piv_))
      throw NumericalError("resolvent: I + lambda*M is singular", 0.0);
  } else if (op.kind() == OperatorKind::sum) {
    // projected iteration x <- proj(x - t((I + lambda*M)x - p)); the map is
    // strongly monotone with modulus 1 and Lipschitz 1 + lambda*|M|
    const double lip = 1.0 + lambda * frobenius_norm(op.matrix());
    step_ = 1.0 / (lip * lip);
  }
}

void ResolventOperator::apply(VecView p, MutVecView x_out) const {
  const int d = op_->dim();
  switch (op_->kind()) {
    case OperatorKind::zero: {
      std::copy(p.begin(), p.end(), x_out.begin());
      return;
    }
    case OperatorKind::indicator: {
      op_->domain().project(p, x_out);
      return;
    }
    case OperatorKind::linear: {
      std::copy(p.begin(), p.end(), x_out.begin());
      lu_solve(lu_, piv_, d, x_out);
      return;
    }
    case OperatorKind::sum: {
      auto& x = scratch_;
      auto& g = scratch2_;
      op_->domain().project(p, MutVecView(x));
      const double scale = 1.0 + norm(p);
      double residual = 0.0;
      for (int it = 0; it < max_iter_; ++it) {
        // g = (I + lambda*M) x - p
        matvec(op_->matrix(), d, x, MutVecView(g));
        for (int j = 0; j < d; ++j) g[j] = x[j] + lambda_ * g[j] - p[j];
        for (int j = 0; j < d; ++j) g[j] = x[j] - step_ * g[j];
        op_->domain().project(g, x_out);
        residual = 0.0;
        for (int j = 0; j < d; ++j) {
          const double dj = x_out[j] - x[j];
          residual += dj * dj;
          x[j] = x_out[j];
        }
        residual = std::sqrt(residual);
        if (residual <= tol_ * scale) return;
      }
      throw NumericalError("resolvent: composite iteration did not converge",
                           residual);
    }
  }
}

std::vector<double> resolvent(const MonotoneOperator& op, double lambda, VecView p) {
  ResolventOperator r(op, lambda);
  std::vector<double> out(op.dim());
  r.apply(p, out);
  return out;
}

std::vector<double> yosida(const MonotoneOperator& op, double lambda, VecView p) {
  std::vector<double> j = resolvent(op, lambda, p);
  for (std::size_t i = 0; i < j.size(); ++i) j[i] = (p[i] - j[i]) / lambda;
  return j;
}

MonotonicityReport graph_monotonicity_check(std::span<const GraphSample> samples,
                                            double tol) {
  if (samples.size() < 2)
    throw ConfigError("monotonicity check: needs at least two samples");
  MonotonicityReport rep;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < samples[i].x.size(); ++k)
        s += (samples[i].x[k] - samples[j].x[k]) * (samples[i].y[k] - samples[j].y[k]);
      if (s < rep.worst) rep.worst = s;
    }
  }
  rep.ok = rep.worst >= -tol;
  return rep;
}

VariationCheck variation_inequality_check(const SamplePath& x,
                                          const FiniteVariationPath& k,
                                          std::span<const GraphSample> graph,
                                          VecView interior_point,
                                          double tol_base) {
  if (!(x.grid() == k.grid()) || x.dim() != k.dim())
    throw ConfigError("variation check: state and correction grids differ");
  const int steps = x.grid().steps;
  const int d = x.dim();
  const double dt = x.grid().dt();

  VariationCheck out;
  out.variation = k.total_variation();
  out.tolerance = tol_base * (1.0 + out.variation);

  double worst = 0.0;
  for (const auto& sample : graph) {
    // most negative subinterval sum of c_i = <X_{i+1} - x, dK_i - y dt>
    double cur = 0.0, best = 0.0;
    for (int i = 0; i < steps; ++i) {
      const auto xi = x.value(i + 1);
      const auto dk = k.increment(i);
      double c = 0.0;
      for (int j = 0; j < d; ++j)
        c += (xi[j] - sample.x[j]) * (dk[j] - sample.y[j] * dt);
      cur = std::min(c, cur + c);
      best = std::min(best, cur);
    }
    worst = std::min(worst, best);
  }
  out.worst_subinterval = worst;
  out.ok = worst >= -out.tolerance;

  for (int i = 0; i < steps; ++i) {
    const auto xi = x.value(i + 1);
    const auto dk = k.increment(i);
    double w = 0.0, dist = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = xi[j] - interior_point[j];
      w += diff * dk[j];
      dist += diff * diff;
    }
    out.work_integral += w;
    out.distance_integral += std::sqrt(dist) * dt;
  }
  return out;
}

std::vector<GraphSample> make_probe_graph(const MonotoneOperator& op, int count,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int d = op.dim();
  std::vector<GraphSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::vector<double> p(d);
    for (auto& v : p) v = 2.0 * gauss(rng);
    GraphSample g;
    switch (op.kind()) {
      case OperatorKind::zero: {
        g.x = p;
        g.y.assign(d, 0.0);
        break;
      }
      case OperatorKind::linear: {
        g.x = p;
        g.y.resize(d);
        matvec(op.matrix(), d, g.x, MutVecView(g.y));
        break;
      }
      case OperatorKind::indicator: {
        g.x = op.domain().project(p);
        g.y.resize(d);
        const double s = unif(rng) * 2.0;
        for (int j = 0; j < d; ++j) g.y[j] = s * (p[j] - g.x[j]);
        break;
      }
      case OperatorKind::sum: {
        g.x = op.domain().project(p);
        g.y.resize(d);
        matvec(op.matrix(), d, g.x, MutVecView(g.y));
        const double s = unif(rng) * 2.0;
        for (int j = 0; j < d; ++j) g.y[j] += s * (p[j] - g.x[j]);
        break;
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace mvsde
