#include "mvsde/control.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mvsde {

ControlPath ControlPath::constant(TimeGrid grid, std::vector<double> value) {
  const int dim = int(value.size());
  ControlPath u(grid, dim);
  for (int i = 0; i < grid.steps; ++i)
    for (int j = 0; j < dim; ++j) u.at(i, j) = value[j];
  return u;
}

ControlPath ControlPath::ramp(TimeGrid grid, std::vector<double> from,
                              std::vector<double> to) {
  if (from.size() != to.size()) throw ConfigError("ramp control: size mismatch");
  const int dim = int(from.size());
  ControlPath u(grid, dim);
  for (int i = 0; i < grid.steps; ++i) {
    const double s = grid.time(i) / grid.horizon;
    for (int j = 0; j < dim; ++j)
      u.at(i, j) = from[j] + s * (to[j] - from[j]);
  }
  return u;
}

ControlPath ControlPath::sinusoid(TimeGrid grid, double amplitude, int frequency,
                                  std::vector<double> direction) {
  const int dim = int(direction.size());
  if (dim == 0) throw ConfigError("sinusoid control: empty direction");
  ControlPath u(grid, dim);
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (int i = 0; i < grid.steps; ++i) {
    const double s =
        amplitude * std::sin(two_pi * frequency * grid.time(i) / grid.horizon);
    for (int j = 0; j < dim; ++j) u.at(i, j) = s * direction[j];
  }
  return u;
}

ControlPath ControlPath::from_csv(std::istream& in, TimeGrid grid, int dim) {
  std::vector<double> times;
  std::vector<double> rows;
  std::string line;
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
        continue;  // header row
      }
      throw ConfigError("control csv: non-numeric row");
    }
    first = false;
    if (int(vals.size()) != dim + 1)
      throw ConfigError("control csv: expected columns t,u1..ud");
    times.push_back(vals[0]);
    rows.insert(rows.end(), vals.begin() + 1, vals.end());
  }
  if (times.empty()) throw ConfigError("control csv: no data rows");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw ConfigError("control csv: times must be strictly increasing");

  ControlPath u(grid, dim);
  std::size_t row = 0;
  for (int i = 0; i < grid.steps; ++i) {
    const double t = grid.time(i);
    while (row + 1 < times.size() && times[row + 1] <= t + 1e-12) ++row;
    for (int j = 0; j < dim; ++j) u.at(i, j) = rows[row * dim + j];
  }
  return u;
}

ControlPath ControlPath::from_csv_file(const std::string& path, TimeGrid grid,
                                       int dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("control csv: cannot open " + path);
  return from_csv(in, grid, dim);
}

void ControlPath::to_csv(std::ostream& out) const {
  out << "t";
  for (int j = 0; j < dim_; ++j) out << ",u" << (j + 1);
  out << "\n";
  for (int i = 0; i < grid_.steps; ++i) {
    out << format_double(grid_.time(i));
    for (int j = 0; j < dim_; ++j)
      out << "," << format_double(u_[std::size_t(i) * dim_ + j]);
    out << "\n";
  }
}

JacobianField JacobianField::analytic(DriftFn jac) {
  JacobianField f;
  f.analytic_ = std::move(jac);
  return f;
}

JacobianField JacobianField::finite_difference(DriftFn drift, double rel_step) {
  JacobianField f;
  f.drift_ = std::move(drift);
  f.rel_step_ = rel_step;
  return f;
}

JacobianField JacobianField::from_coefficients(const CoefficientSet& c) {
  return c.has_jacobian() ? analytic(c.drift_jacobian)
                          : finite_difference(c.drift);
}

void JacobianField::eval(VecView x, const LawProbe& mu, MutVecView out) const {
  if (analytic_) {
    analytic_(x, mu, out);
    return;
  }
  const int d = int(x.size());
  const double h = rel_step_ * (1.0 + norm(x));
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
  std::vector<double> fp(d), fm(d);
  for (int j = 0; j < d; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    drift_(xp, mu, MutVecView(fp));
    drift_(xm, mu, MutVecView(fm));
    for (int i = 0; i < d; ++i)
      out[std::size_t(i) * d + j] = (fp[i] - fm[i]) / (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
}

}  // namespace mvsde
