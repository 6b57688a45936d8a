#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

namespace mvsde::engine {

double FunctionalSpec::eval_terminal(VecView x) const {
  switch (kind) {
    case Kind::none:
    case Kind::zero:
      return 0.0;
    case Kind::clipped_terminal_sq:
      return std::min(1.0, norm_sq(x));
    case Kind::escape_reward:
      return 1.0 - std::min(1.0, norm(x));
    case Kind::custom_terminal:
      return custom(x);
  }
  return 0.0;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MVSDE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

namespace {

struct AuditState {
  // per particle × probe Kadane state over c_i = <X_{i+1}-x, dK_i - y dt>
  std::vector<double> cur, best;
  std::vector<double> tv;  // per particle |K| accumulator
  int probes = 0;

  void init(long particles, int probes_in) {
    probes = probes_in;
    cur.assign(std::size_t(particles) * probes, 0.0);
    best.assign(std::size_t(particles) * probes, 0.0);
    tv.assign(particles, 0.0);
  }
  void step(long j, const AuditSpec& spec, VecView x_next, VecView dk, double dt) {
    const int d = int(x_next.size());
    tv[j] += norm(dk);
    for (int p = 0; p < probes; ++p) {
      const auto& g = spec.graph[p];
      double c = 0.0;
      for (int k = 0; k < d; ++k)
        c += (x_next[k] - g.x[k]) * (dk[k] - g.y[k] * dt);
      double& cu = cur[std::size_t(j) * probes + p];
      double& be = best[std::size_t(j) * probes + p];
      cu = std::min(c, cu + c);
      be = std::min(be, cu);
    }
  }
  void finish(long j, const AuditSpec& spec, ReplicaStat& stat) {
    const double tol = spec.tol_base * (1.0 + tv[j]);
    double worst = 0.0;
    for (int p = 0; p < probes; ++p)
      worst = std::min(worst, best[std::size_t(j) * probes + p]);
    if (worst < -tol) ++stat.audit_violations;
    stat.audit_worst = std::min(stat.audit_worst, worst);
  }
};

}  // namespace

void simulate_system(const Scenario& sc, const ReplicaRequest& rq,
                     std::uint32_t replica, ReplicaStat& stat,
                     double* terminal_slot, PathStore* store_main,
                     PathStore* store_base) {
  const int d = sc.coeffs.dim;
  const long N = sc.particles;
  const int M = sc.grid.steps;
  const double dt = sc.grid.dt();
  const double sqdt = std::sqrt(dt);
  const double sqeps = std::sqrt(rq.eps);
  const bool coupled = rq.controlled_copy;
  const bool d1 = (d == 1);

  if (rq.control) {
    if (!(rq.control->grid() == sc.grid) || rq.control->dim() != d)
      throw ConfigError("control path does not match the scenario grid");
  }
  if (rq.center_on_limit && !rq.limit)
    throw ConfigError("observation frame requires the limit path");

  GaussianStream stream(sc.seed);
  ResolventOperator res(sc.op, dt, sc.resolvent_tol);

  std::vector<double> X(std::size_t(N) * d), Xnext(std::size_t(N) * d);
  std::vector<double> Z, Znext;
  std::vector<double> start(sc.start);
  if (sc.op.constrained()) start = sc.op.domain().project(start);
  for (long j = 0; j < N; ++j)
    std::memcpy(&X[std::size_t(j) * d], start.data(), sizeof(double) * d);
  if (coupled) {
    Z = X;
    Znext.resize(X.size());
  }

  std::vector<double> mean(d), bbuf(d), sig(std::size_t(d) * d), xi(d), p(d),
      obs(d);
  std::vector<double> noise_cache(d1 ? N : 0);

  std::vector<double> sup2, tube_sup;
  if (rq.track_sup2) sup2.assign(N, 0.0);
  const EventSpec* ev = rq.event;
  if (ev && ev->kind == EventSpec::Kind::tube) tube_sup.assign(N, 0.0);

  AuditState audit_main, audit_base;
  if (rq.audit) {
    audit_main.init(N, int(rq.audit->graph.size()));
    if (coupled) audit_base.init(N, int(rq.audit->graph.size()));
  }

  if (store_main) {
    store_main->states.assign(std::size_t(M + 1) * N * d, 0.0);
    store_main->incs.assign(std::size_t(M) * N * d, 0.0);
  }
  if (store_base) {
    store_base->states.assign(std::size_t(M + 1) * N * d, 0.0);
    store_base->incs.assign(std::size_t(M) * N * d, 0.0);
  }

  auto observe_frame = [&](VecView y, int node, MutVecView out) {
    if (rq.center_on_limit) {
      const auto c = rq.limit->state.value(node);
      for (int k = 0; k < d; ++k) out[k] = (y[k] - c[k]) * rq.obs_scale;
    } else if (rq.obs_scale != 1.0) {
      for (int k = 0; k < d; ++k) out[k] = y[k] * rq.obs_scale;
    } else {
      std::copy(y.begin(), y.end(), out.begin());
    }
  };

  auto node_observers = [&](long j, VecView y, int node) {
    observe_frame(y, node, obs);
    if (rq.track_sup2) {
      const double s = norm_sq(obs);
      if (s > sup2[j]) sup2[j] = s;
    }
    if (!tube_sup.empty()) {
      double s = 0.0;
      if (ev->tube_reference) {
        const auto g = ev->tube_reference->value(node);
        s = dist_sq(obs, g);
      } else {
        s = norm_sq(obs);
      }
      if (s > tube_sup[j]) tube_sup[j] = s;
    }
  };

  // node-0 contributions
  const double* main0 = coupled ? Z.data() : X.data();
  for (long j = 0; j < N; ++j)
    node_observers(j, {main0 + std::size_t(j) * d, std::size_t(d)}, 0);
  if (store_main)
    std::memcpy(store_main->states.data(), main0, sizeof(double) * N * d);
  if (store_base)
    std::memcpy(store_base->states.data(), X.data(), sizeof(double) * N * d);

  LawProbe probe;
  probe.dim = d;
  probe.count = N;
  probe.mean = mean.data();

  bool bail = false;
  for (int i = 0; i < M && !bail; ++i) {
    // empirical law of the base system, frozen within the step
    double m2 = 0.0;
    std::fill(mean.begin(), mean.end(), 0.0);
    for (long j = 0; j < N; ++j) {
      const double* xj = &X[std::size_t(j) * d];
      for (int k = 0; k < d; ++k) {
        mean[k] += xj[k];
        m2 += xj[k] * xj[k];
      }
    }
    for (int k = 0; k < d; ++k) mean[k] /= double(N);
    probe.second_moment = m2 / double(N);
    probe.atoms = X.data();

    const double* uval =
        rq.control ? rq.control->value(i).data() : nullptr;

    for (long j = 0; j < N; ++j) {
      const double* xj = &X[std::size_t(j) * d];
      VecView xview{xj, std::size_t(d)};

      if (rq.noise_override) {
        const double* src = rq.noise_override + (std::size_t(i) * N + j) * d;
        std::copy(src, src + d, xi.begin());
      } else if (d1) {
        if ((i & 1) == 0) {
          const auto z = stream.pair1d(replica, std::uint32_t(j), std::uint32_t(i) >> 1);
          xi[0] = z[0];
          noise_cache[j] = z[1];
        } else {
          xi[0] = noise_cache[j];
        }
      } else {
        stream.fill(replica, std::uint32_t(j), std::uint32_t(i), xi);
      }

      // base system step
      sc.coeffs.drift_eps(rq.eps, xview, probe, bbuf);
      for (int k = 0; k < d; ++k) p[k] = xj[k] + dt * bbuf[k];
      if (rq.eps > 0.0) {
        sc.coeffs.diffusion_eps(rq.eps, xview, probe, sig);
        matvec_add(sig, d, xi, sqeps * sqdt, p);
      }
      double* xn = &Xnext[std::size_t(j) * d];
      res.apply(p, {xn, std::size_t(d)});
      bool finite = true;
      for (int k = 0; k < d; ++k) {
        p[k] -= xn[k];  // correction increment dK
        finite = finite && std::isfinite(xn[k]);
      }
      if (!finite) {
        if (rq.throw_on_nonfinite)
          throw NumericalError(
              "simulation produced a non-finite state at step " +
                  std::to_string(i),
              0.0);
        stat.failed = true;
        bail = true;
        break;
      }
      if (rq.audit) {
        (coupled ? audit_base : audit_main)
            .step(j, *rq.audit, {xn, std::size_t(d)}, p, dt);
      }
      if (store_base) {
        std::memcpy(&store_base->states[(std::size_t(i + 1) * N + j) * d], xn,
                    sizeof(double) * d);
        std::memcpy(&store_base->incs[(std::size_t(i) * N + j) * d], p.data(),
                    sizeof(double) * d);
      }
      if (!coupled) {
        if (store_main) {
          std::memcpy(&store_main->states[(std::size_t(i + 1) * N + j) * d], xn,
                      sizeof(double) * d);
          std::memcpy(&store_main->incs[(std::size_t(i) * N + j) * d], p.data(),
                      sizeof(double) * d);
        }
        node_observers(j, {xn, std::size_t(d)}, i + 1);
        continue;
      }

      // controlled copy: same noise, law from the base system
      const double* zj = &Z[std::size_t(j) * d];
      VecView zview{zj, std::size_t(d)};
      sc.coeffs.drift_eps(rq.eps, zview, probe, bbuf);
      for (int k = 0; k < d; ++k) p[k] = zj[k] + dt * bbuf[k];
      sc.coeffs.diffusion_eps(rq.eps, zview, probe, sig);
      if (rq.eps > 0.0) matvec_add(sig, d, xi, sqeps * sqdt, p);
      if (uval)
        matvec_add(sig, d, {uval, std::size_t(d)}, dt * rq.control_scale, p);
      double* zn = &Znext[std::size_t(j) * d];
      res.apply(p, {zn, std::size_t(d)});
      finite = true;
      for (int k = 0; k < d; ++k) {
        p[k] -= zn[k];
        finite = finite && std::isfinite(zn[k]);
      }
      if (!finite) {
        if (rq.throw_on_nonfinite)
          throw NumericalError(
              "controlled simulation produced a non-finite state at step " +
                  std::to_string(i),
              0.0);
        stat.failed = true;
        bail = true;
        break;
      }
      if (rq.audit) audit_main.step(j, *rq.audit, {zn, std::size_t(d)}, p, dt);
      if (store_main) {
        std::memcpy(&store_main->states[(std::size_t(i + 1) * N + j) * d], zn,
                    sizeof(double) * d);
        std::memcpy(&store_main->incs[(std::size_t(i) * N + j) * d], p.data(),
                    sizeof(double) * d);
      }
      node_observers(j, {zn, std::size_t(d)}, i + 1);
    }
    X.swap(Xnext);
    if (coupled) Z.swap(Znext);
  }

  if (stat.failed) return;

  const std::vector<double>& Ymain = coupled ? Z : X;
  for (long j = 0; j < N; ++j) {
    VecView y{&Ymain[std::size_t(j) * d], std::size_t(d)};
    observe_frame(y, M, obs);
    if (terminal_slot)
      std::memcpy(terminal_slot + std::size_t(j) * d, obs.data(),
                  sizeof(double) * d);
    if (ev) {
      bool hit = false;
      switch (ev->kind) {
        case EventSpec::Kind::none:
          break;
        case EventSpec::Kind::terminal_halfspace:
          hit = dot(ev->normal, obs) >= ev->offset;
          break;
        case EventSpec::Kind::terminal_ball:
          hit = dist_sq(obs, ev->center) <= ev->radius * ev->radius;
          break;
        case EventSpec::Kind::tube:
          hit = tube_sup[j] <= ev->radius * ev->radius;
          break;
      }
      if (hit) ++stat.hits;
    }
    if (rq.functional && rq.functional->kind != FunctionalSpec::Kind::none) {
      const double z = rq.functional_scale * rq.functional->eval_terminal(obs);
      if (z > stat.lse_max) {
        stat.lse_sum = stat.lse_sum * std::exp(stat.lse_max - z) + 1.0;
        stat.lse_max = z;
      } else {
        stat.lse_sum += std::exp(z - stat.lse_max);
      }
    }
    if (rq.audit) {
      audit_main.finish(j, *rq.audit, stat);
      if (coupled) audit_base.finish(j, *rq.audit, stat);
    }
  }
  if (rq.track_sup2) stat.mean_sup2 = pairwise_sum(sup2) / double(N);
}

SweepOutputs sweep(const Scenario& sc, const ReplicaRequest& rq,
                   std::uint32_t first_replica, long count, int threads) {
  SweepOutputs out;
  out.stats.assign(count, ReplicaStat{});
  const std::size_t block =
      rq.want_terminal ? std::size_t(sc.particles) * sc.coeffs.dim : 0;
  if (block) out.terminals.assign(std::size_t(count) * block, 0.0);

  threads = int(std::max<long>(1, std::min<long>(resolve_threads(threads), count)));
  auto worker = [&](long lo, long hi) {
    for (long r = lo; r < hi; ++r) {
      double* slot = block ? &out.terminals[std::size_t(r) * block] : nullptr;
      simulate_system(sc, rq, first_replica + std::uint32_t(r), out.stats[r],
                      slot, nullptr, nullptr);
    }
  };
  if (threads == 1) {
    worker(0, count);
    return out;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mutex;
  const long chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long lo = t * chunk;
    const long hi = std::min<long>(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        worker(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

ParticleEnsemble store_to_ensemble(const PathStore& store, const TimeGrid& grid,
                                   int particles, int dim) {
  ParticleEnsemble ens;
  ens.states.reserve(particles);
  ens.reflections.reserve(particles);
  const int M = grid.steps;
  for (long j = 0; j < particles; ++j) {
    SamplePath path(grid, dim);
    for (int i = 0; i <= M; ++i) {
      const double* src = &store.states[(std::size_t(i) * particles + j) * dim];
      std::copy(src, src + dim, path.value(i).begin());
    }
    FiniteVariationPath k(grid, dim);
    for (int i = 0; i < M; ++i) {
      const double* src = &store.incs[(std::size_t(i) * particles + j) * dim];
      std::copy(src, src + dim, k.increment(i).begin());
    }
    ens.states.push_back(std::move(path));
    ens.reflections.push_back(std::move(k));
  }
  return ens;
}

FullResult run_full(const Scenario& sc, const ReplicaRequest& rq,
                    std::uint32_t replica) {
  FullResult res;
  PathStore main_store;
  PathStore base_store;
  ReplicaRequest req = rq;
  req.throw_on_nonfinite = true;
  simulate_system(sc, req, replica, res.stat, nullptr, &main_store,
                  rq.controlled_copy ? &base_store : nullptr);
  res.main = store_to_ensemble(main_store, sc.grid, sc.particles, sc.coeffs.dim);
  if (rq.controlled_copy)
    res.base = store_to_ensemble(base_store, sc.grid, sc.particles, sc.coeffs.dim);
  return res;
}

PathPair integrate_splitting(const MonotoneOperator& op, const TimeGrid& grid,
                             VecView start, const StepField& drift,
                             const StepField& diffusion,
                             const ControlPath* control, double resolvent_tol) {
  const int d = op.dim();
  if (start.size() != std::size_t(d))
    throw ConfigError("integrator: start dimension mismatch");
  ResolventOperator res(op, grid.dt(), resolvent_tol);
  SamplePath path(grid, d);
  FiniteVariationPath corr(grid, d);
  std::vector<double> y(start.begin(), start.end());
  if (op.constrained()) y = op.domain().project(y);
  std::copy(y.begin(), y.end(), path.value(0).begin());

  const double dt = grid.dt();
  std::vector<double> bbuf(d), sig(std::size_t(d) * d), p(d);
  for (int i = 0; i < grid.steps; ++i) {
    drift(i, y, bbuf);
    for (int k = 0; k < d; ++k) p[k] = y[k] + dt * bbuf[k];
    if (control) {
      diffusion(i, y, sig);
      matvec_add(sig, d, control->value(i), dt, p);
    }
    auto next = path.value(i + 1);
    res.apply(p, next);
    auto dk = corr.increment(i);
    for (int k = 0; k < d; ++k) {
      dk[k] = p[k] - next[k];
      if (!std::isfinite(next[k]))
        throw NumericalError(
            "deterministic solve produced a non-finite state at step " +
                std::to_string(i),
            0.0);
      y[k] = next[k];
    }
  }
  return {std::move(path), std::move(corr)};
}

}  // namespace mvsde::engine
