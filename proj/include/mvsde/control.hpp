#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mvsde/coefficients.hpp"
#include "mvsde/common.hpp"
#include "mvsde/grid.hpp"

namespace mvsde {

// Piecewise-constant control on the solver grid: value(i) applies on
// [t_i, t_{i+1}). Energy is the left-rule quadrature of ½∫|u|².
class ControlPath {
 public:
  ControlPath() = default;
  ControlPath(TimeGrid grid, int dim)
      : grid_(grid), dim_(dim), u_(std::size_t(grid.steps) * dim, 0.0) {}
  ControlPath(TimeGrid grid, int dim, std::vector<double> values)
      : grid_(grid), dim_(dim), u_(std::move(values)) {
    if (u_.size() != std::size_t(grid_.steps) * dim_)
      throw ConfigError("control: value count does not match grid");
  }

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return dim_; }
  VecView value(int step) const {
    return {u_.data() + std::size_t(step) * dim_, std::size_t(dim_)};
  }
  MutVecView value(int step) {
    return {u_.data() + std::size_t(step) * dim_, std::size_t(dim_)};
  }
  double at(int step, int j) const { return u_[std::size_t(step) * dim_ + j]; }
  double& at(int step, int j) { return u_[std::size_t(step) * dim_ + j]; }
  const std::vector<double>& raw() const { return u_; }
  std::vector<double>& raw() { return u_; }

  double l2_norm_sq() const {
    double s = 0.0;
    for (double v : u_) s += v * v;
    return s * grid_.dt();
  }
  double energy() const { return 0.5 * l2_norm_sq(); }
  // Energy-class membership: ||u||_{L2}^2 <= 2m.
  bool in_energy_class(double m) const { return l2_norm_sq() <= 2.0 * m; }

  static ControlPath constant(TimeGrid grid, std::vector<double> value);
  static ControlPath ramp(TimeGrid grid, std::vector<double> from,
                          std::vector<double> to);
  // amplitude * sin(2*pi*frequency*t/T) * direction, sampled at cell lefts.
  static ControlPath sinusoid(TimeGrid grid, double amplitude, int frequency,
                              std::vector<double> direction);
  // CSV columns: t, u1..ud. Each grid cell takes the value of the last row
  // with t <= cell left endpoint.
  static ControlPath from_csv(std::istream& in, TimeGrid grid, int dim);
  static ControlPath from_csv_file(const std::string& path, TimeGrid grid, int dim);
  void to_csv(std::ostream& out) const;

 private:
  TimeGrid grid_;
  int dim_ = 0;
  std::vector<double> u_;
};

// Drift Jacobian access: analytic when supplied, otherwise central finite
// differences with step h = rel_step * (1 + |x|).
class JacobianField {
 public:
  static JacobianField analytic(DriftFn jac);
  static JacobianField finite_difference(DriftFn drift, double rel_step = 1e-5);
  static JacobianField from_coefficients(const CoefficientSet& c);

  // out is d×d row-major.
  void eval(VecView x, const LawProbe& mu, MutVecView out) const;
  bool is_analytic() const { return analytic_ != nullptr; }

 private:
  DriftFn analytic_;
  DriftFn drift_;
  double rel_step_ = 1e-5;
};

}  // namespace mvsde
