#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mvsde/common.hpp"
#include "mvsde/grid.hpp"

namespace mvsde {

enum class DomainKind { whole_space, half_space, box, ball, polyhedron };

// Closed convex domain with nonempty interior. Every constructor validates an
// interior witness with margin >= kInteriorMargin.
class ConvexDomain {
 public:
  static constexpr double kInteriorMargin = 1e-9;

  static ConvexDomain whole_space(int dim);
  // {x : <normal, x> <= offset}; the normal is normalized on construction.
  static ConvexDomain half_space(std::vector<double> normal, double offset);
  // Entries of lower/upper may be -inf/+inf; requires lower < upper.
  static ConvexDomain box(std::vector<double> lower, std::vector<double> upper);
  static ConvexDomain ball(std::vector<double> center, double radius);
  // Intersection of half-spaces {x : <n_i, x> <= c_i}; the interior witness
  // must be supplied and is validated (an infeasible system has none).
  static ConvexDomain polyhedron(std::vector<std::vector<double>> normals,
                                 std::vector<double> offsets,
                                 std::vector<double> interior_point);

  int dim() const { return dim_; }
  DomainKind kind() const { return kind_; }

  // Signed distance to the boundary: positive inside, negative outside.
  // Exact for half-space/box/ball; for polyhedra it is the face-distance
  // minimum (exact inside, a lower bound on -distance outside).
  double margin(VecView x) const;
  bool contains(VecView x, double tol = 0.0) const { return margin(x) >= -tol; }

  // Euclidean nearest point; the result satisfies contains(result, 0).
  void project(VecView p, MutVecView out) const;
  std::vector<double> project(VecView p) const;

  const std::vector<double>& interior_point() const { return interior_; }

  // Descriptor accessors (used by config echo and tests).
  const std::vector<double>& box_lower() const { return lower_; }
  const std::vector<double>& box_upper() const { return upper_; }
  const std::vector<double>& ball_center() const { return center_; }
  double ball_radius() const { return radius_; }
  const std::vector<std::vector<double>>& face_normals() const { return normals_; }
  const std::vector<double>& face_offsets() const { return offsets_; }

 private:
  friend class MonotoneOperator;
  ConvexDomain() = default;

  DomainKind kind_ = DomainKind::whole_space;
  int dim_ = 0;
  std::vector<double> lower_, upper_;            // box
  std::vector<double> center_;                   // ball
  double radius_ = 0.0;                          // ball
  std::vector<std::vector<double>> normals_;     // half_space (1 entry) / polyhedron
  std::vector<double> offsets_;
  std::vector<double> interior_;
};

// One graph point (x, y) with y in A(x).
struct GraphSample {
  std::vector<double> x;
  std::vector<double> y;
};

enum class OperatorKind { zero, indicator, linear, sum };

// Maximal monotone operator from the supported closed list. The linear part
// must have positive semidefinite symmetric part; this is validated on
// construction.
class MonotoneOperator {
 public:
  static MonotoneOperator zero(int dim);
  static MonotoneOperator indicator(ConvexDomain domain);
  static MonotoneOperator linear(int dim, std::vector<double> matrix);
  static MonotoneOperator sum(ConvexDomain domain, std::vector<double> matrix);

  int dim() const { return dim_; }
  OperatorKind kind() const { return kind_; }
  const ConvexDomain& domain() const { return domain_; }
  const std::vector<double>& matrix() const { return matrix_; }
  bool constrained() const {
    return kind_ == OperatorKind::indicator || kind_ == OperatorKind::sum;
  }

 private:
  MonotoneOperator() = default;

  OperatorKind kind_ = OperatorKind::zero;
  int dim_ = 0;
  ConvexDomain domain_;
  std::vector<double> matrix_;
};

// Resolvent of (op, lambda) with the factorization and iteration constants
// prepared once; used per-step by the solvers.
class ResolventOperator {
 public:
  ResolventOperator(const MonotoneOperator& op, double lambda,
                    double tol = 1e-12, int max_iter = 100000);

  // x_out solves x + lambda*A(x) ∋ p. Throws NumericalError when the
  // composite iteration does not reach tolerance.
  void apply(VecView p, MutVecView x_out) const;

  double lambda() const { return lambda_; }

 private:
  const MonotoneOperator* op_;
  double lambda_;
  double tol_;
  int max_iter_;
  std::vector<double> lu_;      // LU of (I + lambda*M) for the linear variant
  std::vector<int> piv_;
  double step_ = 0.0;           // projected-iteration step for the sum variant
  mutable std::vector<double> scratch_, scratch2_;
};

std::vector<double> resolvent(const MonotoneOperator& op, double lambda, VecView p);
std::vector<double> yosida(const MonotoneOperator& op, double lambda, VecView p);

struct MonotonicityReport {
  bool ok = true;
  double worst = 0.0;  // most negative pairwise product
};
MonotonicityReport graph_monotonicity_check(std::span<const GraphSample> samples,
                                            double tol = 1e-12);

struct VariationCheck {
  bool ok = true;
  double worst_subinterval = 0.0;  // most negative subinterval sum over probes
  double tolerance = 0.0;          // resolved absolute tolerance
  // Diagnostics against the supplied interior point a:
  double work_integral = 0.0;      // sum <X - a, dK>
  double variation = 0.0;          // |K| over [0, T]
  double distance_integral = 0.0;  // sum |X - a| dt
};

// Discrete membership check for the pair (X, K): for each probe (x, y) in
// the operator graph, every subinterval sum of <X_{i+1} - x, dK_i - y dt>
// must be >= -tol_base * (1 + |K|_TV). Increments pair with the right node
// because dK_i / dt lies in A(X_{i+1}) for the splitting scheme.
VariationCheck variation_inequality_check(const SamplePath& x,
                                          const FiniteVariationPath& k,
                                          std::span<const GraphSample> graph,
                                          VecView interior_point,
                                          double tol_base = 1e-8);

// Deterministic probe set in Gr(A) for audits and tests.
std::vector<GraphSample> make_probe_graph(const MonotoneOperator& op, int count,
                                          std::uint64_t seed);

}  // namespace mvsde
