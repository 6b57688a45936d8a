#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvsde/config.hpp"
#include "mvsde/rate.hpp"
#include "mvsde/runner.hpp"
#include "mvsde/skeleton.hpp"

namespace py = pybind11;
using namespace mvsde;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style |
                                                            py::array::forcecast>& a) {
  std::vector<double> v(a.size());
  std::copy(a.data(), a.data() + a.size(), v.begin());
  return v;
}

EmpiricalMeasure to_measure(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 1) return EmpiricalMeasure(1, to_vector(a));
  if (a.ndim() == 2) return EmpiricalMeasure(int(a.shape(1)), to_vector(a));
  throw ConfigError("atom array must be (N,) or (N, d)");
}

Scenario scenario_from_config(const std::string& scenario_json) {
  const std::string wrapped =
      std::string("{\"scenario\": ") + scenario_json +
      ", \"experiment\": {\"kind\": \"limit\"}}";
  ParseResult res = parse_config(wrapped);
  if (!res.ok()) {
    std::string msg = "invalid scenario:";
    for (const auto& e : res.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return res.config->scenario;
}

ControlPath control_from_array(
    const Scenario& sc,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& u) {
  const int d = sc.coeffs.dim;
  if (u.ndim() == 1 && d == 1 && u.shape(0) == sc.grid.steps)
    return ControlPath(sc.grid, 1, to_vector(u));
  if (u.ndim() == 2 && u.shape(0) == sc.grid.steps && int(u.shape(1)) == d)
    return ControlPath(sc.grid, d, to_vector(u));
  throw ConfigError("control array must be (steps,) or (steps, d)");
}

SamplePath path_from_array(
    const Scenario& sc,
    const py::array_t<double, py::array::c_style | py::array::forcecast>& g) {
  const int d = sc.coeffs.dim;
  if (g.ndim() == 1 && d == 1 && g.shape(0) == sc.grid.nodes())
    return SamplePath(sc.grid, 1, to_vector(g));
  if (g.ndim() == 2 && g.shape(0) == sc.grid.nodes() && int(g.shape(1)) == d)
    return SamplePath(sc.grid, d, to_vector(g));
  throw ConfigError("path array must be (steps+1,) or (steps+1, d)");
}

py::array_t<double> times_array(const TimeGrid& grid) {
  py::array_t<double> t(grid.nodes());
  for (int i = 0; i < grid.nodes(); ++i) t.mutable_at(i) = grid.time(i);
  return t;
}

py::dict pair_to_dict(const TimeGrid& grid, const PathPair& sol) {
  const int d = sol.state.dim();
  py::array_t<double> x({grid.nodes(), d});
  std::copy(sol.state.raw().begin(), sol.state.raw().end(), x.mutable_data());
  py::array_t<double> k({grid.steps, d});
  std::copy(sol.reflection.raw().begin(), sol.reflection.raw().end(),
            k.mutable_data());
  py::dict out;
  out["t"] = times_array(grid);
  out["x"] = x;
  out["k_increments"] = k;
  return out;
}

py::dict ensemble_to_dict(const TimeGrid& grid, const ParticleEnsemble& ens) {
  const int n = int(ens.states.size());
  const int d = n ? ens.states[0].dim() : 1;
  py::array_t<double> x({n, grid.nodes(), d});
  py::array_t<double> k({n, grid.steps, d});
  for (int j = 0; j < n; ++j) {
    std::copy(ens.states[j].raw().begin(), ens.states[j].raw().end(),
              x.mutable_data() + std::size_t(j) * grid.nodes() * d);
    std::copy(ens.reflections[j].raw().begin(), ens.reflections[j].raw().end(),
              k.mutable_data() + std::size_t(j) * grid.steps * d);
  }
  py::dict out;
  out["t"] = times_array(grid);
  out["x"] = x;
  out["k_increments"] = k;
  return out;
}

py::dict rate_to_dict(const TimeGrid& grid, const RateResult& res) {
  py::dict out;
  out["value"] = res.value;
  out["constraint_residual"] = res.constraint_residual;
  out["iterations"] = res.iterations;
  out["converged"] = res.converged;
  out["certified"] = res.certified;
  const int d = res.control.dim();
  py::array_t<double> u({grid.steps, d});
  std::copy(res.control.raw().begin(), res.control.raw().end(), u.mutable_data());
  out["control"] = u;
  return out;
}

RateTarget target_from_kwargs(const Scenario& sc, const std::string& kind,
                              py::object normal, double offset, py::object center,
                              double radius, py::object path) {
  if (kind == "terminal-halfspace")
    return RateTarget::terminal_halfspace(
        to_vector(normal.cast<py::array_t<double>>()), offset);
  if (kind == "terminal-ball")
    return RateTarget::terminal_ball(to_vector(center.cast<py::array_t<double>>()),
                                     radius);
  if (kind == "tube") {
    SamplePath c = path.is_none() ? solve_limit(sc).state
                                  : path_from_array(sc, path.cast<py::array_t<double>>());
    return RateTarget::tube(std::move(c), radius);
  }
  if (kind == "path")
    return RateTarget::for_path(path_from_array(sc, path.cast<py::array_t<double>>()));
  throw ConfigError("unknown rate target kind '" + kind + "'");
}

}  // namespace

PYBIND11_MODULE(_mvsde, m) {
  m.doc() = "Reflected mean-field SDE simulation and deviation experiments";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception<BoundaryContactError>(m, "BoundaryContactError",
                                               PyExc_RuntimeError);

  py::class_<ConvexDomain>(m, "ConvexDomain")
      .def_static("whole_space", &ConvexDomain::whole_space, py::arg("dim"))
      .def_static(
          "half_space",
          [](py::array_t<double> normal, double offset) {
            return ConvexDomain::half_space(to_vector(normal), offset);
          },
          py::arg("normal"), py::arg("offset"))
      .def_static(
          "box",
          [](py::array_t<double> lower, py::array_t<double> upper) {
            return ConvexDomain::box(to_vector(lower), to_vector(upper));
          },
          py::arg("lower"), py::arg("upper"))
      .def_static(
          "ball",
          [](py::array_t<double> center, double radius) {
            return ConvexDomain::ball(to_vector(center), radius);
          },
          py::arg("center"), py::arg("radius"))
      .def_property_readonly("dim", &ConvexDomain::dim)
      .def("margin",
           [](const ConvexDomain& d, py::array_t<double> x) {
             return d.margin(to_vector(x));
           })
      .def("contains",
           [](const ConvexDomain& d, py::array_t<double> x, double tol) {
             return d.contains(to_vector(x), tol);
           },
           py::arg("x"), py::arg("tol") = 0.0)
      .def("project", [](const ConvexDomain& d, py::array_t<double> p) {
        return py::array_t<double>(py::cast(d.project(to_vector(p))));
      });

  py::class_<MonotoneOperator>(m, "MonotoneOperator")
      .def_static("zero", &MonotoneOperator::zero, py::arg("dim"))
      .def_static("indicator", &MonotoneOperator::indicator, py::arg("domain"))
      .def_static(
          "linear",
          [](py::array_t<double> matrix) {
            if (matrix.ndim() != 2 || matrix.shape(0) != matrix.shape(1))
              throw ConfigError("matrix must be square");
            return MonotoneOperator::linear(int(matrix.shape(0)),
                                            to_vector(matrix));
          },
          py::arg("matrix"))
      .def_static(
          "sum",
          [](ConvexDomain domain, py::array_t<double> matrix) {
            return MonotoneOperator::sum(std::move(domain), to_vector(matrix));
          },
          py::arg("domain"), py::arg("matrix"))
      .def_property_readonly("dim", &MonotoneOperator::dim);

  m.def(
      "resolvent",
      [](const MonotoneOperator& op, double lam, py::array_t<double> p) {
        return py::array_t<double>(py::cast(resolvent(op, lam, to_vector(p))));
      },
      py::arg("op"), py::arg("lam"), py::arg("p"),
      "Solve x + lam*A(x) containing p");
  m.def(
      "yosida",
      [](const MonotoneOperator& op, double lam, py::array_t<double> p) {
        return py::array_t<double>(py::cast(yosida(op, lam, to_vector(p))));
      },
      py::arg("op"), py::arg("lam"), py::arg("p"));

  m.def("w2_1d", [](py::array_t<double> a, py::array_t<double> b) {
    return w2_1d(to_measure(a), to_measure(b));
  });
  m.def("w2_assignment", [](py::array_t<double> a, py::array_t<double> b) {
    return w2_assignment(to_measure(a), to_measure(b));
  });
  m.def("w2_coupled_bound", [](py::array_t<double> a, py::array_t<double> b) {
    return w2_coupled_bound(to_measure(a), to_measure(b));
  });
  m.def("second_moment",
        [](py::array_t<double> a) { return second_moment(to_measure(a)); });

  py::class_<Scenario>(m, "Scenario")
      .def_static("from_config", &scenario_from_config, py::arg("scenario_json"),
                  "Build a scenario from the JSON used in config files")
      .def_property_readonly("dim",
                             [](const Scenario& sc) { return sc.coeffs.dim; })
      .def_property_readonly("steps",
                             [](const Scenario& sc) { return sc.grid.steps; })
      .def_property_readonly("horizon",
                             [](const Scenario& sc) { return sc.grid.horizon; })
      .def_readwrite("particles", &Scenario::particles)
      .def_readwrite("seed", &Scenario::seed);

  m.def(
      "solve_limit",
      [](const Scenario& sc) { return pair_to_dict(sc.grid, solve_limit(sc)); },
      py::arg("scenario"));
  m.def(
      "solve_skeleton",
      [](const Scenario& sc, py::array_t<double> u) {
        return pair_to_dict(sc.grid, solve_skeleton(sc, control_from_array(sc, u)));
      },
      py::arg("scenario"), py::arg("control"));
  m.def(
      "solve_mdp_skeleton",
      [](const Scenario& sc, py::array_t<double> psi) {
        const JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
        return pair_to_dict(sc.grid,
                            solve_mdp_skeleton(sc, control_from_array(sc, psi), jac));
      },
      py::arg("scenario"), py::arg("control"));
  m.def(
      "simulate_particles",
      [](const Scenario& sc, double eps, std::uint32_t replica) {
        return ensemble_to_dict(sc.grid, simulate_particles(sc, eps, replica));
      },
      py::arg("scenario"), py::arg("eps"), py::arg("replica") = 0);
  m.def(
      "simulate_coupled_limit",
      [](const Scenario& sc, double eps, std::uint32_t replica) {
        CoupledEnsemble ce = simulate_coupled_limit(sc, eps, replica);
        py::dict out = ensemble_to_dict(sc.grid, ce.ensemble);
        out["limit"] = pair_to_dict(sc.grid, ce.limit);
        return out;
      },
      py::arg("scenario"), py::arg("eps"), py::arg("replica") = 0);
  m.def(
      "mdp_process",
      [](const Scenario& sc, double eps, double lambda, std::uint32_t replica) {
        MdpEnsemble me = mdp_process(sc, eps, lambda, replica);
        ParticleEnsemble ens{std::move(me.fluctuations), std::move(me.reflections)};
        py::dict out = ensemble_to_dict(sc.grid, ens);
        out["limit"] = pair_to_dict(sc.grid, me.limit);
        return out;
      },
      py::arg("scenario"), py::arg("eps"), py::arg("lambda_"),
      py::arg("replica") = 0);
  m.def(
      "weak_convergence_probe",
      [](const Scenario& sc, py::array_t<double> u, const std::string& mode,
         int n) {
        const ProbeMode pm = mode == "lowpass" ? ProbeMode::lowpass
                                               : ProbeMode::oscillatory;
        return weak_convergence_probe(sc, control_from_array(sc, u), pm, n);
      },
      py::arg("scenario"), py::arg("control"), py::arg("mode"), py::arg("n"));

  m.def(
      "control_energy",
      [](const Scenario& sc, py::array_t<double> u) {
        return control_energy(control_from_array(sc, u));
      },
      py::arg("scenario"), py::arg("control"));
  m.def(
      "rate_of_path",
      [](const Scenario& sc, py::array_t<double> g) {
        return rate_to_dict(sc.grid, rate_of_path(sc, path_from_array(sc, g)));
      },
      py::arg("scenario"), py::arg("path"));
  m.def(
      "mdp_rate_of_path",
      [](const Scenario& sc, py::array_t<double> g) {
        const JacobianField jac = JacobianField::from_coefficients(sc.coeffs);
        return rate_to_dict(sc.grid,
                            mdp_rate_of_path(sc, path_from_array(sc, g), jac));
      },
      py::arg("scenario"), py::arg("path"));
  m.def(
      "rate_optimize",
      [](const Scenario& sc, const std::string& kind, py::object normal,
         double offset, py::object center, double radius, py::object path,
         const std::string& regime) {
        RateQuery query;
        query.target =
            target_from_kwargs(sc, kind, normal, offset, center, radius, path);
        query.regime = regime == "mdp" ? RateRegime::mdp : RateRegime::ldp;
        return rate_to_dict(sc.grid, rate_optimize(sc, query));
      },
      py::arg("scenario"), py::arg("kind"), py::arg("normal") = py::none(),
      py::arg("offset") = 0.0, py::arg("center") = py::none(),
      py::arg("radius") = 0.0, py::arg("path") = py::none(),
      py::arg("regime") = "ldp");

  m.def(
      "run_config",
      [](const std::string& text, py::object out_dir, py::object seed,
         py::object threads) {
        DispatchOverrides ov;
        if (!out_dir.is_none()) ov.out_dir = out_dir.cast<std::string>();
        if (!seed.is_none()) ov.seed = seed.cast<std::uint64_t>();
        if (!threads.is_none()) ov.threads = threads.cast<int>();
        std::string err;
        const int status = run_config_text(text, ov, &err);
        if (!err.empty()) throw ConfigError(err);
        return status;
      },
      py::arg("text"), py::arg("out_dir") = py::none(),
      py::arg("seed") = py::none(), py::arg("threads") = py::none(),
      "Run a full experiment config; returns the dispatcher exit status");
  m.def("validate_config", [](const std::string& text) {
    ParseResult res = parse_config(text);
    py::dict out;
    out["ok"] = res.ok();
    out["errors"] = res.errors;
    out["canonical"] = res.ok() ? res.config->canonical.dump(2) : std::string();
    return out;
  });
  m.def("describe_schema", &describe_schema);
}
