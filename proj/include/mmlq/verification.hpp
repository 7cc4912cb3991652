#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmlq/oracle.hpp"
#include "mmlq/simulation.hpp"
#include "mmlq/splitting.hpp"

namespace mmlq {

// Scalar moment accumulator (mean and standard error).
struct MomentAcc {
  long n = 0;
  double sum = 0, sumsq = 0;
  void add(double x) {
    ++n;
    sum += x;
    sumsq += x * x;
  }
  double mean() const { return n ? sum / n : 0; }
  double std_error() const;
  // |mean| in standard-error units; 0 if both vanish, huge if SE = 0 with a
  // nonzero mean (a deterministic violation).
  double sigma_statistic() const;
};

struct CheckResult {
  std::string name;
  std::string mode;  // "exact" | "mc" | "bitwise"
  double statistic = 0;
  double tolerance = 0;
  bool pass = false;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckResult> results;
  bool pass() const;
  json to_json() const;
  void append(CheckReport other);
};

CheckResult mc_check(const std::string& name, double statistic,
                     const std::string& detail = "");
CheckResult exact_check(const std::string& name, double residual,
                        const std::string& detail = "");
CheckResult bitwise_check(const std::string& name, bool identical,
                          const std::string& detail = "");

// ---------------------------------------------------------------------------
// Per-trial quantities.
// ---------------------------------------------------------------------------

// The control-free cost floor, evaluated from one draw of the primitives and
// the Riccati solutions alone.
double stoc_cost(const Scenario& s, const GainSchedule& g,
                 const PrimitiveDraw& d);

struct DecompTerms {
  double Jcom = 0, Jstoc = 0;
  std::vector<double> Jloc;
  double total() const;
};

// Per-trial completion-of-squares terms of the cost decomposition.
DecompTerms decomp_terms(const Scenario& s, const GainSchedule& g,
                         const Trajectory& traj, const SplitTrajectory& sp);

enum class EstimateMode { ConditionalMean, LinearProjection };

// Per-trial refined split of Jcom and Jloc via estimate/error projections:
//   zc_hat = common state estimate; zc_tilde = [0; xw_1; ...; xw_n]
//   zl_hat_i = xloc_i + xw_hat_i;   zl_tilde_i = m_i + xw_i - xw_hat_i
// with xw_hat_i from the conditional-density filter (ConditionalMean) or the
// recursive least-squares filter (LinearProjection). The tilde variables are
// functions of the primitive draws only.
struct ProjectionTerms {
  double Jcom_hat = 0, Jcom_tilde = 0;
  std::vector<double> Jloc_hat, Jloc_tilde;
  std::vector<Vec> zc_tilde;                // t = 1..T
  std::vector<std::vector<Vec>> zl_tilde;   // [minor-1][t]
};

ProjectionTerms projection_terms(const SimContext& ctx, const Trajectory& traj,
                                 const SplitTrajectory& sp, EstimateMode mode);

// ---------------------------------------------------------------------------
// Batch checks (each runs its own deterministic trial loop).
// ---------------------------------------------------------------------------

// Per-step cost identities under the common/local/stochastic split.
CheckReport check_cost_split(const SimContext& ctx, long N,
                             std::uint64_t seed);

// Cost = Jcom + sum Jloc + Jstoc (within 4 SE), plus bitwise equality of the
// control-free Jstoc across the two contexts under common draws.
CheckReport check_total_decomposition(const SimContext& a, const SimContext& b,
                                      long N, std::uint64_t seed);

// Jcom = Jcom_hat + Jcom_tilde and Jloc = Jloc_hat + Jloc_tilde (within
// 4 SE); for the canonical strategies the hat terms themselves vanish.
CheckReport check_projection_split(const SimContext& ctx, long N,
                                   std::uint64_t seed, EstimateMode mode);

// Zero conditional cross-covariance of minor states given common information
// (moment surrogate; exact factorization lives in the oracle checks).
CheckReport check_conditional_independence(const SimContext& ctx, long N,
                                           std::uint64_t seed);

// The statistical orthogonality family: major components vanish exactly,
// local components have zero mean, and all estimate/error cross moments
// vanish at 4 SE with randomized weighting matrices. Includes the
// control-split regression consistency and static-reduction reconstruction.
CheckReport check_property_suite(const SimContext& ctx, long N,
                                 std::uint64_t seed, EstimateMode mode);

// evaluate() plus the decomposition means (Jcom, Jloc, Jstoc, residual).
// `extra`, when given, is forwarded to evaluate() alongside the
// decomposition bookkeeping (same locking rules).
CostReport evaluate_decomposed(const SimContext& ctx, long N,
                               std::uint64_t seed, bool parallel,
                               const TrajectoryObserver& extra = {});

// ---------------------------------------------------------------------------
// Exact checks on finite-support scenarios via enumeration.
// ---------------------------------------------------------------------------

// Conditional-expectation and factorization properties that require exact
// conditioning: zero conditional means of local components (current and
// delayed), measurability of the common component, zero conditional mean of
// the common error, cost-split and decomposition identities, vanishing hat
// terms for the canonical strategies, and — when n >= 2 — the factorization
// of the minor agents' conditional law.
CheckReport oracle_exact_checks(const Scenario& s);

}  // namespace mmlq
