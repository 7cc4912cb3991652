#pragma once

#include <string>
#include <vector>

#include "mmlq/riccati.hpp"
#include "mmlq/scenario.hpp"

namespace mmlq {

enum class StrategyKind { Optimal, BestLinear, StateFeedback, CustomLinear };

// A matrix (or vector) sequence over t = 1..T-1. Size 1 means
// time-invariant; otherwise entry t-1 applies at time t.
struct GainSeq {
  std::vector<Mat> M;
  const Mat& at(int t) const { return M[std::min<std::size_t>(t - 1, M.size() - 1)]; }
};
struct AffSeq {
  std::vector<Vec> v;
  const Vec& at(int t) const { return v[std::min<std::size_t>(t - 1, v.size() - 1)]; }
};

// Affine strategy over the feature vector
// [x0(t); x0(t-1); ...; x0(t-window+1) (zero-padded); xhat_c; xhat_i; 1]:
//   u0  = Gw0 win + Gc0 xhat_c + g0
//   u_i = Gw  win + Gc  xhat_c + Gl xhat_i + g
// where xhat_i is the agent's best-linear state estimate.
struct CustomMinorGains {
  GainSeq Gw, Gc, Gl;
  AffSeq g;
};
struct CustomGains {
  int window = 1;
  GainSeq Gw0, Gc0;
  AffSeq g0;
  std::vector<CustomMinorGains> minors;
};

// JSON form:
// {"window": W, "major": {"Gw": .., "Gc": .., "g": ..},
//  "minors": [{"Gw": .., "Gc": .., "Gl": .., "g": ..}, ...]}
// Each gain is a matrix (time-invariant) or an array of matrices (per step).
CustomGains custom_gains_from_json(const json& j);
CustomGains load_custom_gains(const std::string& path);
// Checks feature/control dimensions against the scenario.
void validate_custom_gains(const Scenario& s, const CustomGains& cg);

struct Strategy {
  StrategyKind kind = StrategyKind::Optimal;
  CustomGains custom;         // kind == CustomLinear
  bool expose_ucom = true;    // false: records omit the closed-form split so
                              // the regression path can be exercised
};

Strategy strategy_from_spec(const std::string& spec);

// ---------------------------------------------------------------------------
// Canonical gain-schedule strategies. All take the stacked common estimate
// xhat_c; minor actions additionally take the agent's own estimate (or state).
// ---------------------------------------------------------------------------

// u0(t) = -Lcom_0(t) xhat_c
Vec act_major(const Scenario& s, const GainSchedule& g, int t, const Vec& xhat_c);

// Common component of minor agent i's action: -Lcom_i(t) xhat_c.
Vec ucom_minor(const Scenario& s, const GainSchedule& g, int t, int i,
               const Vec& xhat_c);

// u_i(t) = -Lcom_i(t) xhat_c - Lloc_i(t) (xhat_i - xhat_c block i),
// with xhat_i the conditional-density mean.
Vec act_minor_optimal(const Scenario& s, const GainSchedule& g, int t, int i,
                      const Vec& xhat_c, const Vec& xhat_i);

// Same feedback form with the best-linear estimate.
Vec act_minor_linear(const Scenario& s, const GainSchedule& g, int t, int i,
                     const Vec& xhat_c, const Vec& xhat_i);

// Perfect-observation specialization: the realized state replaces the
// estimate. Requires C_ii = I and v_i = 0 (checked by the caller once per
// scenario via require_state_feedback).
Vec act_minor_state_feedback(const Scenario& s, const GainSchedule& g, int t,
                             int i, const Vec& xhat_c, const Vec& x_i);

// Throws a validation error unless every minor agent has C_ii = I, v_i = 0.
void require_state_feedback(const Scenario& s);

// ---------------------------------------------------------------------------
// CustomLinear actions.
// ---------------------------------------------------------------------------

// Builds the truncated major-state window [x0(t); ...; x0(t-window+1)],
// zero-padded before t = 1. x0_hist[t] is the realized major state (1-based).
Vec custom_window(const Scenario& s, const std::vector<Vec>& x0_hist, int t,
                  int window);

Vec act_custom_major(const CustomGains& cg, int t, const Vec& win,
                     const Vec& xhat_c);
Vec act_custom_minor(const CustomGains& cg, int t, int i, const Vec& win,
                     const Vec& xhat_c, const Vec& xhat_i);
// Closed-form common component: the agent estimate's conditional expectation
// given the common information is the corresponding block of xhat_c.
Vec ucom_custom_minor(const Scenario& s, const CustomGains& cg, int t, int i,
                      const Vec& win, const Vec& xhat_c);

}  // namespace mmlq
