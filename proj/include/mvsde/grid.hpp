#pragma once

#include <cstddef>
#include <vector>

#include "mvsde/common.hpp"

namespace mvsde {

// Uniform grid on [0, horizon] with `steps` cells. time(steps) == horizon
// exactly by construction.
struct TimeGrid {
  double horizon = 1.0;
  int steps = 1000;

  TimeGrid() = default;
  TimeGrid(double T, int m) : horizon(T), steps(m) {
    if (!(T > 0.0)) throw ConfigError("time grid: horizon must be positive");
    if (m < 1) throw ConfigError("time grid: step count must be >= 1");
  }

  double dt() const { return horizon / steps; }
  double time(int i) const { return horizon * double(i) / double(steps); }
  int nodes() const { return steps + 1; }
  bool operator==(const TimeGrid& o) const {
    return horizon == o.horizon && steps == o.steps;
  }
};

// Time-gridded trajectory: (steps+1) nodes of dimension dim.
class SamplePath {
 public:
  SamplePath() = default;
  SamplePath(TimeGrid grid, int dim)
      : grid_(grid), dim_(dim), v_(std::size_t(grid.nodes()) * dim, 0.0) {}
  SamplePath(TimeGrid grid, int dim, std::vector<double> values)
      : grid_(grid), dim_(dim), v_(std::move(values)) {
    if (v_.size() != std::size_t(grid_.nodes()) * dim_)
      throw ConfigError("sample path: value count does not match grid");
  }

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return dim_; }
  VecView value(int node) const { return {v_.data() + std::size_t(node) * dim_, std::size_t(dim_)}; }
  MutVecView value(int node) { return {v_.data() + std::size_t(node) * dim_, std::size_t(dim_)}; }
  double at(int node, int j) const { return v_[std::size_t(node) * dim_ + j]; }
  double& at(int node, int j) { return v_[std::size_t(node) * dim_ + j]; }
  const std::vector<double>& raw() const { return v_; }
  std::vector<double>& raw() { return v_; }

  double sup_distance(const SamplePath& other) const {
    double best = 0.0;
    for (int i = 0; i < grid_.nodes(); ++i) {
      const double d = dist_sq(value(i), other.value(i));
      if (d > best) best = d;
    }
    return std::sqrt(best);
  }

 private:
  TimeGrid grid_;
  int dim_ = 0;
  std::vector<double> v_;
};

// Finite-variation correction path K, stored as per-cell increments with
// K(0) = 0. value(i) is the running sum of the first i increments.
class FiniteVariationPath {
 public:
  FiniteVariationPath() = default;
  FiniteVariationPath(TimeGrid grid, int dim)
      : grid_(grid), dim_(dim), inc_(std::size_t(grid.steps) * dim, 0.0) {}
  FiniteVariationPath(TimeGrid grid, int dim, std::vector<double> increments)
      : grid_(grid), dim_(dim), inc_(std::move(increments)) {
    if (inc_.size() != std::size_t(grid_.steps) * dim_)
      throw ConfigError("variation path: increment count does not match grid");
  }

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return dim_; }
  VecView increment(int step) const {
    return {inc_.data() + std::size_t(step) * dim_, std::size_t(dim_)};
  }
  MutVecView increment(int step) {
    return {inc_.data() + std::size_t(step) * dim_, std::size_t(dim_)};
  }
  const std::vector<double>& raw() const { return inc_; }
  std::vector<double>& raw() { return inc_; }

  double total_variation() const {
    double tv = 0.0;
    for (int i = 0; i < grid_.steps; ++i) tv += norm(increment(i));
    return tv;
  }

  std::vector<double> value(int node) const {
    std::vector<double> v(dim_, 0.0);
    for (int i = 0; i < node; ++i)
      for (int j = 0; j < dim_; ++j) v[j] += inc_[std::size_t(i) * dim_ + j];
    return v;
  }

  // Cumulative values on all nodes as a SamplePath (for dumps/plots).
  SamplePath cumulative() const {
    SamplePath out(grid_, dim_);
    std::vector<double> acc(dim_, 0.0);
    for (int i = 0; i < grid_.steps; ++i) {
      for (int j = 0; j < dim_; ++j) acc[j] += inc_[std::size_t(i) * dim_ + j];
      auto row = out.value(i + 1);
      for (int j = 0; j < dim_; ++j) row[j] = acc[j];
    }
    return out;
  }

 private:
  TimeGrid grid_;
  int dim_ = 0;
  std::vector<double> inc_;
};

struct PathPair {
  SamplePath state;
  FiniteVariationPath reflection;
};

}  // namespace mvsde
