#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mmlq/controllers.hpp"
#include "mmlq/estimators.hpp"
#include "mmlq/riccati.hpp"
#include "mmlq/scenario.hpp"

namespace mmlq {

// One complete realization of the primitive random variables.
struct PrimitiveDraw {
  std::vector<Vec> x1;               // initial states, agents 0..n
  std::vector<std::vector<Vec>> w;   // [agent][t], t = 1..T-1 (slot 0 unused)
  std::vector<std::vector<Vec>> v;   // [minor-1][t], t = 1..T (slot 0 unused)
};

// Deterministic function of (seed, trial, variable identity): repeated calls
// are bitwise identical and independent streams never overlap.
PrimitiveDraw draw_primitives(const Scenario& s, std::uint64_t seed,
                              std::uint64_t trial);

// Immutable per-run data shared by every trial.
struct SimContext {
  const Scenario* s = nullptr;
  GainSchedule sched;
  std::vector<FilterSchedule> fsched;  // [minor-1]
  std::vector<FilterPlan> plans;       // [minor-1]; empty if no density filter
  Strategy strategy;
  bool run_all_filters = false;  // run both minor filters regardless of need
};

SimContext make_context(const Scenario& s, Strategy strategy,
                        BayesModeOverride ov = BayesModeOverride::Auto,
                        bool run_all_filters = false);

bool context_needs_bayes(const Strategy& st, bool run_all_filters);
bool context_needs_llms(const Strategy& st, bool run_all_filters);

// A closed-loop trajectory. Time arrays are 1-based (slot 0 unused).
//
// The rollout tracks the state as x = x^g + x^w, where x^w is the
// noise-driven component (x^w(1) = x(1), x^w_i(t+1) = A_ii x^w_i(t) + w_i(t))
// and x^g collects every control- and coupling-driven term. Observations
// split accordingly: y_i = C_ii x^g_i + y^w_i with y^w_i = C_ii x^w_i + v_i.
// The minor filters consume only y^w_i, so the recorded estimation errors
// x^w_i - x̂^w_i are bitwise identical across strategies under common draws.
struct Trajectory {
  std::vector<Vec> x;                    // stacked state, t = 1..T
  std::vector<Vec> u;                    // stacked control, t = 1..T-1
  std::vector<std::vector<Vec>> y;       // [minor-1][t], t = 1..T
  std::vector<Vec> xhat_c;               // common estimate, t = 1..T
  std::vector<std::vector<Vec>> xhat_i;  // [minor-1][t]: agent state estimate
  std::vector<Vec> ucom, uloc;           // stacked, t = 1..T-1
  bool ucom_exact = true;                // closed-form split recorded
  std::vector<std::vector<Vec>> xw;      // [agent 0..n][t]: noise-driven part
  std::vector<std::vector<Vec>> xw_hat_bayes;  // [minor-1][t] (when run)
  std::vector<std::vector<Vec>> xw_hat_llms;   // [minor-1][t] (when run)
  PrimitiveDraw draw;
  std::vector<double> step_cost;  // t = 1..T-1
  double terminal_cost = 0;
  double cost = 0;
};

Trajectory rollout(const SimContext& ctx, std::uint64_t seed,
                   std::uint64_t trial);

// Max dynamics/observation residual of the stored arrays (replay check).
double replay_residual(const Scenario& s, const Trajectory& traj);

struct CostReport {
  double mean = 0;
  double std_error = 0;
  long trials = 0;
  // Optional decomposition (filled by the verification module).
  bool has_decomposition = false;
  double Jcom = 0, Jstoc = 0, residual = 0;
  std::vector<double> Jloc;
  json to_json() const;
};

using TrajectoryObserver = std::function<void(const Trajectory&, long)>;

// Monte Carlo cost estimate over common-random-number trials. Sequential
// runs are deterministic; parallel runs reduce per-thread partials in thread
// order, so the mean matches the sequential value to reduction round-off.
// The observer, when given, is called once per trial (under a lock in
// parallel mode, in unspecified order).
CostReport evaluate(const SimContext& ctx, long N, std::uint64_t seed,
                    bool parallel = false,
                    const TrajectoryObserver& observer = {});

}  // namespace mmlq
