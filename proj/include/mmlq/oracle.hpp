#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mmlq/simulation.hpp"

namespace mmlq {

// Exhaustive enumeration of the primitive randomness of a finite-support
// scenario: every joint outcome with its exact probability, the control-free
// paths it induces, and strategy-independent groupings of the realized
// information sets (outcomes in one group are indistinguishable to the
// conditioning agent, under any strategy).
struct ExactLaw {
  const Scenario* s = nullptr;
  long n_outcomes = 0;
  std::vector<double> prob;          // [o]
  std::vector<PrimitiveDraw> draws;  // [o]

  // Control-free paths: xw[o][agent][t] = noise-driven state component,
  // yw[o][minor-1][t] = its observation part (t = 1..T; slot 0 unused).
  std::vector<std::vector<std::vector<Vec>>> xw, yw;

  // common_group[t][o]: class of the major path realization through t.
  // agent_group[i-1][t][o]: class of (major path through t, observation part
  // through t, first observation excluded) — what minor agent i's filter has
  // consumed.
  std::vector<std::vector<int>> common_group;
  std::vector<std::vector<std::vector<int>>> agent_group;
};

// Enumerates the law. Continuous noise or more than the outcome guard
// (10^6) -> structured error.
ExactLaw oracle_enumerate(const Scenario& s);

// result[o] = probability-weighted mean of `value` over o's cluster.
std::vector<Vec> cluster_means(const ExactLaw& law,
                               const std::vector<int>& cluster,
                               const std::vector<Vec>& value);

// Exact linear least-squares estimate of xw_i(t) from yw_i(2:t), computed
// from analytic second moments (Gram solves; independent of the production
// gain recursions). Result: [t][o], t = 1..T.
std::vector<std::vector<Vec>> oracle_llms_xw(const ExactLaw& law, int i);

enum class OracleEstimates { ConditionalMean, LinearProjection };

// Stacked control at (t, outcome) given the oracle's exact estimates:
// xhat_c = E[x(t) | common class], xhat_minors[i-1] = agent i's state
// estimate under the chosen mode, x = the realized state.
using OracleStrategy =
    std::function<Vec(int t, long o, const Vec& xhat_c,
                      const std::vector<Vec>& xhat_minors, const Vec& x)>;

// The optimal feedback form acting on whatever estimates it is given.
OracleStrategy oracle_canonical_strategy(const Scenario& s,
                                         const GainSchedule& g);

struct OracleEval {
  double cost = 0;                // exact expected cost
  std::vector<Trajectory> trajs;  // per outcome, with exact estimate fields:
                                  // ucom/uloc = exact conditional split,
                                  // xw_hat_bayes = conditional means,
                                  // xw_hat_llms = exact linear projections
};

// Rolls the closed loop over every outcome simultaneously, computing the
// estimates by exact conditioning at each step. The recorded control split
// is the exact conditional mean of u(t) within each common class (for the
// canonical strategies it coincides with the closed form).
OracleEval oracle_evaluate(const ExactLaw& law, const OracleStrategy& strat,
                           OracleEstimates mode);

}  // namespace mmlq
