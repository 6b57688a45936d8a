#pragma once

// Internal simulation engine shared by the dynamics/skeleton solvers and the
// experiment lab. Not part of the installed interface.

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "mvsde/dynamics.hpp"

namespace mvsde::engine {

// Path event, evaluated online in the observation frame.
struct EventSpec {
  enum class Kind { none, terminal_halfspace, terminal_ball, tube };
  Kind kind = Kind::none;
  std::vector<double> normal;  // terminal_halfspace: <n, x_T> >= offset
  double offset = 0.0;
  std::vector<double> center;  // terminal_ball: |x_T - center| <= radius
  double radius = 0.0;         // ball and tube radius
  const SamplePath* tube_reference = nullptr;  // tube center; nullptr = zero path
};

// Bounded functional of the path, evaluated online in the observation frame.
struct FunctionalSpec {
  enum class Kind { none, zero, clipped_terminal_sq, escape_reward, custom_terminal };
  Kind kind = Kind::none;
  std::function<double(VecView)> custom;  // terminal state -> value

  double eval_terminal(VecView x) const;
};

// Online discrete membership audit of (state, correction) pairs against a
// probe set from the operator graph.
struct AuditSpec {
  std::vector<GraphSample> graph;
  double tol_base = 1e-8;
};

struct ReplicaRequest {
  double eps = 0.0;
  const ControlPath* control = nullptr;  // applied to the controlled copy
  double control_scale = 1.0;
  bool controlled_copy = false;  // evolve Z sharing noise, law from the base system

  // Observation frame: obs = (y - center) * obs_scale with y the controlled
  // copy when present, the base system otherwise.
  const PathPair* limit = nullptr;  // frame center and coupling reference
  bool center_on_limit = false;
  double obs_scale = 1.0;

  bool track_sup2 = false;    // mean over particles of sup_t |obs|^2
  bool want_terminal = false; // collect observed terminal states
  const EventSpec* event = nullptr;
  const FunctionalSpec* functional = nullptr;
  double functional_scale = 1.0;  // z = functional_scale * f(path)
  const AuditSpec* audit = nullptr;

  const double* noise_override = nullptr;  // steps × N × d standard normals
  bool throw_on_nonfinite = false;         // solvers throw; sweeps record
};

struct ReplicaStat {
  double mean_sup2 = 0.0;
  long hits = 0;
  double lse_max = -std::numeric_limits<double>::infinity();
  double lse_sum = 0.0;  // sum over particles of exp(z - lse_max)
  long audit_violations = 0;
  double audit_worst = 0.0;
  bool failed = false;
};

struct PathStore {
  // node-major states: states[(node * N + j) * d + k]
  std::vector<double> states;
  // step-major increments: incs[(step * N + j) * d + k]
  std::vector<double> incs;
};

// Runs one N-particle system; writes per-replica statistics and optionally
// the observed terminal block (N × d) and full path stores.
void simulate_system(const Scenario& sc, const ReplicaRequest& rq,
                     std::uint32_t replica, ReplicaStat& stat,
                     double* terminal_slot, PathStore* store_main,
                     PathStore* store_base);

struct SweepOutputs {
  std::vector<ReplicaStat> stats;
  std::vector<double> terminals;  // count × N × d when requested
};

// Replica-parallel sweep. Outputs land in per-replica slots, so results are
// a pure function of (scenario, request, replica range) for any thread count.
SweepOutputs sweep(const Scenario& sc, const ReplicaRequest& rq,
                   std::uint32_t first_replica, long count, int threads);

struct FullResult {
  ParticleEnsemble main;  // controlled copy when requested, else base system
  ParticleEnsemble base;  // base system when a controlled copy was evolved
  ReplicaStat stat;
};

FullResult run_full(const Scenario& sc, const ReplicaRequest& rq,
                    std::uint32_t replica);

using StepField = std::function<void(int step, VecView y, MutVecView out)>;

// Deterministic splitting integrator: p = y + dt*drift(i, y)
// [+ dt * diffusion(i, y) * u_i], then the resolvent step; the correction
// increment is p minus the new state.
PathPair integrate_splitting(const MonotoneOperator& op, const TimeGrid& grid,
                             VecView start, const StepField& drift,
                             const StepField& diffusion,
                             const ControlPath* control, double resolvent_tol);

// Thread-count resolution: explicit > 0 wins, else MVSDE_THREADS, else 1.
int resolve_threads(int requested);

ParticleEnsemble store_to_ensemble(const PathStore& store, const TimeGrid& grid,
                                   int particles, int dim);

}  // namespace mvsde::engine
