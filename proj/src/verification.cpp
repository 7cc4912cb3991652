#include "mmlq/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>

#include <nlohmann/json.hpp>

#include "mmlq/errors.hpp"
#include "mmlq/tolerances.hpp"

namespace mmlq {

namespace {

constexpr std::uint64_t kWeightStream = 6;  // randomized weighting matrices

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Deterministic pseudo-random weighting matrix for a moment probe.
Mat probe_matrix(std::uint64_t seed, std::uint64_t id, int t, Eigen::Index r,
                 Eigen::Index c) {
  rng::Stream st(seed, id, kWeightStream, 0, static_cast<std::uint64_t>(t));
  Mat M(r, c);
  std::uint64_t k = 0;
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) M(i, j) = st.normal(k++);
  }
  return M;
}

const char* strategy_label(const Strategy& st) {
  switch (st.kind) {
    case StrategyKind::Optimal: return "optimal";
    case StrategyKind::BestLinear: return "best-linear";
    case StrategyKind::StateFeedback: return "state-feedback";
    case StrategyKind::CustomLinear: return "custom";
  }
  return "unknown";
}

// A family of moment accumulators reported as one check (worst slot wins).
struct Family {
  std::string name;
  std::vector<std::string> label;
  std::vector<MomentAcc> acc;

  explicit Family(std::string nm) : name(std::move(nm)) {}

  int slot(std::string lb) {
    label.push_back(std::move(lb));
    acc.emplace_back();
    return static_cast<int>(acc.size()) - 1;
  }
};

CheckResult family_mc(const Family& f) {
  double worst = -1;
  int arg = -1;
  for (std::size_t k = 0; k < f.acc.size(); ++k) {
    const double sg = f.acc[k].sigma_statistic();
    if (sg > worst) {
      worst = sg;
      arg = static_cast<int>(k);
    }
  }
  std::string detail;
  if (arg >= 0) {
    detail = "worst " + f.label[arg] + ": mean=" + fmt(f.acc[arg].mean()) +
             ", se=" + fmt(f.acc[arg].std_error());
  }
  return mc_check(f.name, std::max(worst, 0.0), detail);
}

Vec stacked_x1(const Scenario& s, const PrimitiveDraw& d) {
  const AgentTopology& topo = s.topology;
  Vec x(topo.dx_total());
  for (int i = 0; i <= topo.n; ++i) {
    x.segment(topo.x_offset(i), topo.dx[i]) = d.x1[i];
  }
  return x;
}

Vec stacked_w(const Scenario& s, const PrimitiveDraw& d, int t) {
  const AgentTopology& topo = s.topology;
  Vec w(topo.dx_total());
  for (int i = 0; i <= topo.n; ++i) {
    w.segment(topo.x_offset(i), topo.dx[i]) = d.w[i][t];
  }
  return w;
}

ProjectionTerms projection_terms_core(const Scenario& s, const GainSchedule& g,
                                      const Trajectory& traj,
                                      const SplitTrajectory& sp,
                                      EstimateMode mode) {
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const auto& xw_hat = mode == EstimateMode::ConditionalMean
                           ? traj.xw_hat_bayes
                           : traj.xw_hat_llms;
  if (static_cast<int>(xw_hat.size()) != n ||
      (n > 0 && xw_hat[0][1].size() == 0)) {
    throw validation_error(
        std::string("projection split needs the ") +
        (mode == EstimateMode::ConditionalMean ? "conditional-mean"
                                               : "least-squares") +
        " filter estimates recorded on the trajectory");
  }

  ProjectionTerms pt;
  pt.Jloc_hat.assign(n, 0.0);
  pt.Jloc_tilde.assign(n, 0.0);
  pt.zc_tilde.assign(T + 1, Vec());
  pt.zl_tilde.assign(n, std::vector<Vec>(T + 1));

  // Major-coupling part of the stochastic component of each minor state.
  std::vector<std::vector<Vec>> m(n, std::vector<Vec>(T + 1));
  for (int i = 1; i <= n; ++i) {
    m[i - 1][1] = Vec::Zero(topo.dx[i]);
    for (int t = 1; t <= T - 1; ++t) {
      m[i - 1][t + 1] =
          s.sys.Aii[i - 1] * m[i - 1][t] + s.sys.Ai0[i - 1] * traj.xw[0][t];
    }
  }
  for (int t = 1; t <= T; ++t) {
    Vec zc = Vec::Zero(topo.dx_total());
    for (int i = 1; i <= n; ++i) {
      zc.segment(topo.x_offset(i), topo.dx[i]) = traj.xw[i][t];
      pt.zl_tilde[i - 1][t] =
          m[i - 1][t] + traj.xw[i][t] - xw_hat[i - 1][t];
    }
    pt.zc_tilde[t] = zc;
  }

  for (int t = 1; t <= T - 1; ++t) {
    // The estimate-part residual is assembled per agent row with the same
    // arithmetic the strategies use, so it vanishes identically for the
    // gain-form strategies.
    Vec hc(topo.du_total());
    for (int i = 0; i <= n; ++i) {
      hc.segment(topo.u_offset(i), topo.du[i]) =
          sp.ucom[t].segment(topo.u_offset(i), topo.du[i]) +
          g.Lcom_row(s, t, i) * traj.xhat_c[t];
    }
    pt.Jcom_hat += hc.dot(g.DeltaCom[t] * hc);
    const Vec tc = g.Lcom[t] * pt.zc_tilde[t];
    pt.Jcom_tilde += tc.dot(g.DeltaCom[t] * tc);

    for (int i = 1; i <= n; ++i) {
      const Vec zl_hat =
          traj.xhat_i[i - 1][t] -
          traj.xhat_c[t].segment(topo.x_offset(i), topo.dx[i]);
      const Vec hl = sp.uloc[t].segment(topo.u_offset(i), topo.du[i]) +
                     g.Lloc[i - 1][t] * zl_hat;
      pt.Jloc_hat[i - 1] += hl.dot(g.DeltaLoc[i - 1][t] * hl);
      const Vec tl = g.Lloc[i - 1][t] * pt.zl_tilde[i - 1][t];
      pt.Jloc_tilde[i - 1] += tl.dot(g.DeltaLoc[i - 1][t] * tl);
    }
  }
  return pt;
}

}  // namespace

double MomentAcc::std_error() const {
  if (n < 2) return 0;
  const double m = mean();
  const double var = std::max(0.0, (sumsq - n * m * m) / (n - 1));
  return std::sqrt(var / n);
}

double MomentAcc::sigma_statistic() const {
  const double m = mean();
  // Means inside the exact tolerance are numerically zero: identities that
  // hold pointwise up to roundoff would otherwise divide a roundoff mean by
  // an even smaller standard error.
  if (std::abs(m) <= tol::kExact) return 0;
  const double se = std_error();
  if (se > 0) return std::abs(m) / se;
  return 1e300;
}

bool CheckReport::pass() const {
  for (const CheckResult& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

json CheckReport::to_json() const {
  json checks = json::array();
  for (const CheckResult& r : results) {
    json j{{"check", r.name},
           {"mode", r.mode},
           {"statistic", r.statistic},
           {"tolerance", r.tolerance},
           {"pass", r.pass}};
    if (!r.detail.empty()) j["detail"] = r.detail;
    checks.push_back(std::move(j));
  }
  return json{{"pass", pass()}, {"checks", std::move(checks)}};
}

void CheckReport::append(CheckReport other) {
  results.insert(results.end(),
                 std::make_move_iterator(other.results.begin()),
                 std::make_move_iterator(other.results.end()));
}

CheckResult mc_check(const std::string& name, double statistic,
                     const std::string& detail) {
  return {name, "mc", statistic, tol::kMcSigmas,
          statistic <= tol::kMcSigmas, detail};
}

CheckResult exact_check(const std::string& name, double residual,
                        const std::string& detail) {
  return {name, "exact", residual, tol::kExact, residual <= tol::kExact,
          detail};
}

CheckResult bitwise_check(const std::string& name, bool identical,
                          const std::string& detail) {
  return {name, "bitwise", identical ? 0.0 : 1.0, 0.0, identical, detail};
}

double stoc_cost(const Scenario& s, const GainSchedule& g,
                 const PrimitiveDraw& d) {
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  auto [A, B] = assemble_global(s);
  (void)B;

  std::vector<Vec> xs(T + 1);
  xs[1] = stacked_x1(s, d);
  for (int t = 1; t <= T - 1; ++t) xs[t + 1] = A * xs[t] + stacked_w(s, d, t);

  double J = xs[1].dot(g.Scom[1] * xs[1]);
  for (int i = 1; i <= n; ++i) {
    const Vec xi = xs[1].segment(topo.x_offset(i), topo.dx[i]);
    J += xi.dot(g.Sloc[i - 1][1] * xi);
  }
  for (int t = 1; t <= T - 1; ++t) {
    const Vec w = stacked_w(s, d, t);
    J += w.dot(g.Scom[t + 1] * w);
    const Vec x0 = xs[t].head(topo.dx[0]);
    for (int i = 1; i <= n; ++i) {
      const Vec wi = w.segment(topo.x_offset(i), topo.dx[i]);
      J += wi.dot(g.Sloc[i - 1][t + 1] * wi);
      const Vec xi = xs[t].segment(topo.x_offset(i), topo.dx[i]);
      const Vec ci = s.sys.Ai0[i - 1] * x0;
      J += ci.dot(g.Sloc[i - 1][t + 1] *
                  (ci + 2.0 * (s.sys.Aii[i - 1] * xi)));
      J -= xi.dot(s.Qii(i) * xi);
    }
  }
  for (int i = 1; i <= n; ++i) {
    const Vec xi = xs[T].segment(topo.x_offset(i), topo.dx[i]);
    J -= xi.dot(s.QTii(i) * xi);
  }
  return J;
}

double DecompTerms::total() const {
  double sum = Jcom + Jstoc;
  for (double x : Jloc) sum += x;
  return sum;
}

DecompTerms decomp_terms(const Scenario& s, const GainSchedule& g,
                         const Trajectory& traj, const SplitTrajectory& sp) {
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  DecompTerms dt;
  dt.Jloc.assign(n, 0.0);
  for (int t = 1; t <= T - 1; ++t) {
    const Vec rc = sp.ucom[t] + g.Lcom[t] * sp.zcom[t];
    dt.Jcom += rc.dot(g.DeltaCom[t] * rc);
    for (int i = 1; i <= n; ++i) {
      const Vec rl = sp.uloc[t].segment(topo.u_offset(i), topo.du[i]) +
                     g.Lloc[i - 1][t] * sp.zloc[i - 1][t];
      dt.Jloc[i - 1] += rl.dot(g.DeltaLoc[i - 1][t] * rl);
    }
  }
  dt.Jstoc = stoc_cost(s, g, traj.draw);
  return dt;
}

ProjectionTerms projection_terms(const SimContext& ctx, const Trajectory& traj,
                                 const SplitTrajectory& sp,
                                 EstimateMode mode) {
  return projection_terms_core(*ctx.s, ctx.sched, traj, sp, mode);
}

CheckReport check_cost_split(const SimContext& ctx, long N,
                             std::uint64_t seed) {
  if (N < 1) throw usage_error("cost-split check needs at least one trial");
  const Scenario& s = *ctx.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;

  Family fx{"state-cost-split"};
  Family fu{"control-cost-split"};
  std::vector<MomentAcc> lhsx(T + 1), rhsx(T + 1), lhsu(T), rhsu(T);
  for (int t = 1; t <= T; ++t) fx.slot("t=" + std::to_string(t));
  for (int t = 1; t <= T - 1; ++t) fu.slot("t=" + std::to_string(t));

  for (long k = 0; k < N; ++k) {
    const Trajectory traj = rollout(ctx, seed, k);
    const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
    for (int t = 1; t <= T; ++t) {
      const Mat& Qt = t == T ? s.cost.QT : s.cost.Q;
      const double lhs = traj.x[t].dot(Qt * traj.x[t]);
      double rhs = sp.zcom[t].dot(Qt * sp.zcom[t]);
      for (int i = 1; i <= n; ++i) {
        const Mat Qii = t == T ? s.QTii(i) : s.Qii(i);
        rhs += sp.zloc[i - 1][t].dot(Qii * sp.zloc[i - 1][t]);
        const Vec xsi = sp.xstoc[t].segment(topo.x_offset(i), topo.dx[i]);
        rhs -= xsi.dot(Qii * xsi);
      }
      fx.acc[t - 1].add(lhs - rhs);
      lhsx[t].add(lhs);
      rhsx[t].add(rhs);
    }
    for (int t = 1; t <= T - 1; ++t) {
      const double lhs = traj.u[t].dot(s.cost.R * traj.u[t]);
      double rhs = sp.ucom[t].dot(s.cost.R * sp.ucom[t]);
      for (int i = 1; i <= n; ++i) {
        const Vec ul = sp.uloc[t].segment(topo.u_offset(i), topo.du[i]);
        rhs += ul.dot(s.Rii(i) * ul);
      }
      fu.acc[t - 1].add(lhs - rhs);
      lhsu[t].add(lhs);
      rhsu[t].add(rhs);
    }
  }

  CheckReport rep;
  CheckResult rx = family_mc(fx);
  CheckResult ru = family_mc(fu);
  // Report both sides of the worst slot for diagnosis.
  for (int t = 1; t <= T; ++t) {
    if (rx.detail.rfind("worst t=" + std::to_string(t) + ":", 0) == 0) {
      rx.detail += "; lhs=" + fmt(lhsx[t].mean()) +
                   ", rhs=" + fmt(rhsx[t].mean());
    }
  }
  for (int t = 1; t <= T - 1; ++t) {
    if (ru.detail.rfind("worst t=" + std::to_string(t) + ":", 0) == 0) {
      ru.detail += "; lhs=" + fmt(lhsu[t].mean()) +
                   ", rhs=" + fmt(rhsu[t].mean());
    }
  }
  rep.results.push_back(std::move(rx));
  rep.results.push_back(std::move(ru));
  return rep;
}

CheckReport check_total_decomposition(const SimContext& a, const SimContext& b,
                                      long N, std::uint64_t seed) {
  if (N < 1) {
    throw usage_error("decomposition check needs at least one trial");
  }
  MomentAcc res_a, res_b;
  bool stoc_same = true;
  double stoc_gap = 0;
  for (long k = 0; k < N; ++k) {
    const Trajectory ta = rollout(a, seed, k);
    const Trajectory tb = rollout(b, seed, k);
    const SplitTrajectory sa = propagate_splits(*a.s, ta, ta.ucom, ta.uloc);
    const SplitTrajectory sb = propagate_splits(*b.s, tb, tb.ucom, tb.uloc);
    const DecompTerms da = decomp_terms(*a.s, a.sched, ta, sa);
    const DecompTerms db = decomp_terms(*b.s, b.sched, tb, sb);
    res_a.add(ta.cost - da.total());
    res_b.add(tb.cost - db.total());
    if (da.Jstoc != db.Jstoc) {
      stoc_same = false;
      stoc_gap = std::max(stoc_gap, std::abs(da.Jstoc - db.Jstoc));
    }
  }
  CheckReport rep;
  rep.results.push_back(mc_check(
      std::string("cost-decomposition[") + strategy_label(a.strategy) + "]",
      res_a.sigma_statistic(),
      "mean residual=" + fmt(res_a.mean()) + ", se=" + fmt(res_a.std_error())));
  rep.results.push_back(mc_check(
      std::string("cost-decomposition[") + strategy_label(b.strategy) + "]",
      res_b.sigma_statistic(),
      "mean residual=" + fmt(res_b.mean()) + ", se=" + fmt(res_b.std_error())));
  rep.results.push_back(bitwise_check(
      "stochastic-cost-control-free", stoc_same,
      stoc_same ? "identical across strategies under common draws"
                : "max gap " + fmt(stoc_gap)));
  return rep;
}

CheckReport check_projection_split(const SimContext& ctx, long N,
                                   std::uint64_t seed, EstimateMode mode) {
  if (N < 1) throw usage_error("projection check needs at least one trial");
  const Scenario& s = *ctx.s;
  const int n = s.topology.n;

  MomentAcc com_gap, com_hat;
  std::vector<MomentAcc> loc_gap(n), loc_hat(n);
  for (long k = 0; k < N; ++k) {
    const Trajectory traj = rollout(ctx, seed, k);
    const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
    const DecompTerms dt = decomp_terms(s, ctx.sched, traj, sp);
    const ProjectionTerms pt = projection_terms(ctx, traj, sp, mode);
    com_gap.add(dt.Jcom - pt.Jcom_hat - pt.Jcom_tilde);
    com_hat.add(pt.Jcom_hat);
    for (int i = 1; i <= n; ++i) {
      loc_gap[i - 1].add(dt.Jloc[i - 1] - pt.Jloc_hat[i - 1] -
                         pt.Jloc_tilde[i - 1]);
      loc_hat[i - 1].add(pt.Jloc_hat[i - 1]);
    }
  }

  CheckReport rep;
  rep.results.push_back(mc_check(
      "common-cost-projection-split", com_gap.sigma_statistic(),
      "mean=" + fmt(com_gap.mean()) + ", se=" + fmt(com_gap.std_error())));
  if (n > 0) {
    double worst = 0;
    int arg = 1;
    for (int i = 1; i <= n; ++i) {
      if (loc_gap[i - 1].sigma_statistic() >= worst) {
        worst = loc_gap[i - 1].sigma_statistic();
        arg = i;
      }
    }
    rep.results.push_back(
        mc_check("local-cost-projection-split", worst,
                 "worst agent " + std::to_string(arg) + ": mean=" +
                     fmt(loc_gap[arg - 1].mean())));
  }
  if (ctx.strategy.kind != StrategyKind::CustomLinear) {
    rep.results.push_back(mc_check("common-estimate-cost-zero",
                                   com_hat.sigma_statistic(),
                                   "mean=" + fmt(com_hat.mean())));
    if (n > 0) {
      double wh = 0;
      int ah = 1;
      for (int i = 1; i <= n; ++i) {
        if (loc_hat[i - 1].sigma_statistic() >= wh) {
          wh = loc_hat[i - 1].sigma_statistic();
          ah = i;
        }
      }
      rep.results.push_back(
          mc_check("local-estimate-cost-zero", wh,
                   "worst agent " + std::to_string(ah) + ": mean=" +
                       fmt(loc_hat[ah - 1].mean())));
    }
  }
  return rep;
}

CheckReport check_conditional_independence(const SimContext& ctx, long N,
                                           std::uint64_t seed) {
  const Scenario& s = *ctx.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  if (n < 2) {
    throw validation_error(
        "conditional-independence check needs at least two minor agents");
  }
  if (N < 1) throw usage_error("independence check needs at least one trial");

  Family f{"conditional-cross-covariance"};
  struct Probe {
    int i, j, t, slot;
    Mat M;
  };
  std::vector<Probe> probes;
  std::uint64_t id = 0;
  for (int t = 1; t <= T; ++t) {
    for (int i = 1; i <= n; ++i) {
      for (int j = i + 1; j <= n; ++j) {
        Probe p{i, j, t,
                f.slot("t=" + std::to_string(t) + ",agents=(" +
                       std::to_string(i) + "," + std::to_string(j) + ")"),
                probe_matrix(seed, id++, t, topo.dx[i], topo.dx[j])};
        probes.push_back(std::move(p));
      }
    }
  }
  for (long k = 0; k < N; ++k) {
    const Trajectory traj = rollout(ctx, seed, k);
    for (const Probe& p : probes) {
      const Vec ei =
          traj.x[p.t].segment(topo.x_offset(p.i), topo.dx[p.i]) -
          traj.xhat_c[p.t].segment(topo.x_offset(p.i), topo.dx[p.i]);
      const Vec ej =
          traj.x[p.t].segment(topo.x_offset(p.j), topo.dx[p.j]) -
          traj.xhat_c[p.t].segment(topo.x_offset(p.j), topo.dx[p.j]);
      f.acc[p.slot].add(ei.dot(p.M * ej));
    }
  }
  CheckReport rep;
  rep.results.push_back(family_mc(f));
  return rep;
}

namespace {

struct TildeArrays {
  std::vector<Vec> zc;
  std::vector<std::vector<Vec>> zl;
};

// Rebuilds the estimation-error variables from one primitive draw alone,
// mirroring the rollout's arithmetic step for step.
TildeArrays tilde_from_draw(const SimContext& ctx, const PrimitiveDraw& d,
                            EstimateMode mode, std::uint64_t seed,
                            std::uint64_t trial) {
  const Scenario& s = *ctx.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;

  std::vector<std::vector<Vec>> xw(n + 1, std::vector<Vec>(T + 1));
  for (int i = 0; i <= n; ++i) {
    xw[i][1] = d.x1[i];
    const Mat& A = i == 0 ? s.sys.A00 : s.sys.Aii[i - 1];
    for (int t = 1; t <= T - 1; ++t) xw[i][t + 1] = A * xw[i][t] + d.w[i][t];
  }
  std::vector<std::vector<Vec>> xw_hat(n, std::vector<Vec>(T + 1));
  for (int i = 1; i <= n; ++i) {
    if (mode == EstimateMode::ConditionalMean) {
      BayesFilter f(ctx.plans[i - 1], seed, trial);
      xw_hat[i - 1][1] = f.mean();
      for (int t = 2; t <= T; ++t) {
        f.step(t, Vec(s.sys.Cii[i - 1] * xw[i][t] + d.v[i - 1][t]));
        xw_hat[i - 1][t] = f.mean();
      }
    } else {
      LlmsFilter f(s.sys.Aii[i - 1], s.sys.Cii[i - 1], &ctx.fsched[i - 1]);
      xw_hat[i - 1][1] = f.mean();
      for (int t = 2; t <= T; ++t) {
        f.step(t, Vec(s.sys.Cii[i - 1] * xw[i][t] + d.v[i - 1][t]));
        xw_hat[i - 1][t] = f.mean();
      }
    }
  }

  TildeArrays out;
  out.zc.assign(T + 1, Vec());
  out.zl.assign(n, std::vector<Vec>(T + 1));
  std::vector<std::vector<Vec>> m(n, std::vector<Vec>(T + 1));
  for (int i = 1; i <= n; ++i) {
    m[i - 1][1] = Vec::Zero(topo.dx[i]);
    for (int t = 1; t <= T - 1; ++t) {
      m[i - 1][t + 1] =
          s.sys.Aii[i - 1] * m[i - 1][t] + s.sys.Ai0[i - 1] * xw[0][t];
    }
  }
  for (int t = 1; t <= T; ++t) {
    Vec zc = Vec::Zero(topo.dx_total());
    for (int i = 1; i <= n; ++i) {
      zc.segment(topo.x_offset(i), topo.dx[i]) = xw[i][t];
      out.zl[i - 1][t] = m[i - 1][t] + xw[i][t] - xw_hat[i - 1][t];
    }
    out.zc[t] = zc;
  }
  return out;
}

bool same_bits(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

CheckReport check_property_suite(const SimContext& ctx, long N,
                                 std::uint64_t seed, EstimateMode mode) {
  if (N < 1) throw usage_error("property suite needs at least one trial");
  const Scenario& s = *ctx.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const int dx0 = topo.dx[0];
  const int du0 = topo.du[0];
  const int dxt = topo.dx_total();
  const int dut = topo.du_total();
  const bool has_proj =
      mode == EstimateMode::ConditionalMean
          ? context_needs_bayes(ctx.strategy, ctx.run_all_filters)
          : context_needs_llms(ctx.strategy, ctx.run_all_filters);

  // Moment probes, each with its own deterministic weighting matrix.
  using ProbeFn =
      std::function<double(const Trajectory&, const SplitTrajectory&,
                           const ProjectionTerms&)>;
  struct Probe {
    Family* family;
    int slot;
    ProbeFn fn;
  };
  std::vector<Family> fams;
  fams.reserve(16);
  std::vector<Probe> probes;
  std::uint64_t id = 0;
  auto xoff = [&](int i) { return topo.x_offset(i); };
  auto uoff = [&](int i) { return topo.u_offset(i); };

  auto& f_p3 = fams.emplace_back(Family{"control-split-orthogonality"});
  for (int t = 1; t <= T - 1; ++t) {
    Mat M = probe_matrix(seed, id++, t, dut, dut);
    probes.push_back({&f_p3, f_p3.slot("t=" + std::to_string(t)),
                      [&, t, M](const Trajectory&, const SplitTrajectory& sp,
                                const ProjectionTerms&) {
                        return sp.ucom[t].dot(M * sp.uloc[t]);
                      }});
  }
  auto& f_p5 = fams.emplace_back(Family{"local-control-zero-mean"});
  for (int i = 1; i <= n; ++i) {
    for (int t = 1; t <= T - 1; ++t) {
      Mat M = probe_matrix(seed, id++, t, topo.du[i], 1);
      probes.push_back(
          {&f_p5,
           f_p5.slot("agent=" + std::to_string(i) + ",t=" + std::to_string(t)),
           [&, i, t, M](const Trajectory&, const SplitTrajectory& sp,
                        const ProjectionTerms&) {
             return M.col(0).dot(sp.uloc[t].segment(uoff(i), topo.du[i]));
           }});
    }
  }
  auto& f_p7 = fams.emplace_back(Family{"local-control-common-moment-zero"});
  for (int i = 1; i <= n; ++i) {
    for (int tau = 1; tau <= T - 1; ++tau) {
      for (int sig = 1; sig <= T; ++sig) {
        Mat M = probe_matrix(seed, id++, tau * 64 + sig, dx0, topo.du[i]);
        probes.push_back(
            {&f_p7,
             f_p7.slot("agent=" + std::to_string(i) + ",tau=" +
                       std::to_string(tau) + ",sigma=" + std::to_string(sig)),
             [&, i, tau, sig, M](const Trajectory& traj,
                                 const SplitTrajectory& sp,
                                 const ProjectionTerms&) {
               return traj.x[sig].head(dx0).dot(
                   M * sp.uloc[tau].segment(uoff(i), topo.du[i]));
             }});
      }
    }
    for (int tau = 1; tau <= T - 1; ++tau) {
      for (int sig = 1; sig <= T - 1; ++sig) {
        Mat M = probe_matrix(seed, id++, tau * 64 + sig, du0, topo.du[i]);
        probes.push_back(
            {&f_p7,
             f_p7.slot("agent=" + std::to_string(i) + ",tau=" +
                       std::to_string(tau) +
                       ",major-control-sigma=" + std::to_string(sig)),
             [&, i, tau, sig, M](const Trajectory& traj,
                                 const SplitTrajectory& sp,
                                 const ProjectionTerms&) {
               return traj.u[sig].head(du0).dot(
                   M * sp.uloc[tau].segment(uoff(i), topo.du[i]));
             }});
      }
    }
  }
  auto& f_p8 = fams.emplace_back(Family{"local-state-common-moment-zero"});
  for (int i = 1; i <= n; ++i) {
    for (int tau = 1; tau <= T; ++tau) {
      for (int sig = 1; sig <= T; ++sig) {
        Mat M = probe_matrix(seed, id++, tau * 64 + sig, dx0, topo.dx[i]);
        probes.push_back(
            {&f_p8,
             f_p8.slot("agent=" + std::to_string(i) + ",tau=" +
                       std::to_string(tau) + ",sigma=" + std::to_string(sig)),
             [&, i, tau, sig, M](const Trajectory& traj,
                                 const SplitTrajectory& sp,
                                 const ProjectionTerms&) {
               return traj.x[sig].head(dx0).dot(
                   M * sp.xloc[tau].segment(xoff(i), topo.dx[i]));
             }});
      }
    }
  }
  auto& f_p9 =
      fams.emplace_back(Family{"local-state-stochastic-major-orthogonality"});
  auto& f_p10 =
      fams.emplace_back(Family{"local-state-common-state-orthogonality"});
  auto& f_p11 =
      fams.emplace_back(Family{"local-control-stochastic-major-orthogonality"});
  for (int i = 1; i <= n; ++i) {
    for (int t = 1; t <= T; ++t) {
      Mat M9 = probe_matrix(seed, id++, t, topo.dx[i], dx0);
      probes.push_back(
          {&f_p9,
           f_p9.slot("agent=" + std::to_string(i) + ",t=" + std::to_string(t)),
           [&, i, t, M9](const Trajectory&, const SplitTrajectory& sp,
                         const ProjectionTerms&) {
             return sp.xloc[t]
                 .segment(xoff(i), topo.dx[i])
                 .dot(M9 * sp.xstoc[t].head(dx0));
           }});
      Mat M10 = probe_matrix(seed, id++, t, topo.dx[i], dxt);
      probes.push_back(
          {&f_p10,
           f_p10.slot("agent=" + std::to_string(i) + ",t=" +
                      std::to_string(t)),
           [&, i, t, M10](const Trajectory&, const SplitTrajectory& sp,
                          const ProjectionTerms&) {
             return sp.xloc[t]
                 .segment(xoff(i), topo.dx[i])
                 .dot(M10 * sp.xcom[t]);
           }});
      if (t <= T - 1) {
        Mat M11 = probe_matrix(seed, id++, t, topo.du[i], dx0);
        probes.push_back(
            {&f_p11,
             f_p11.slot("agent=" + std::to_string(i) + ",t=" +
                        std::to_string(t)),
             [&, i, t, M11](const Trajectory&, const SplitTrajectory& sp,
                            const ProjectionTerms&) {
               return sp.uloc[t]
                   .segment(uoff(i), topo.du[i])
                   .dot(M11 * sp.xstoc[t].head(dx0));
             }});
      }
    }
  }
  if (has_proj) {
    auto& f_c2m = fams.emplace_back(Family{"common-error-zero-mean"});
    auto& f_c2 = fams.emplace_back(Family{"common-error-common-moment-zero"});
    auto& f_c3 =
        fams.emplace_back(Family{"common-error-estimate-orthogonality"});
    auto& f_c4 =
        fams.emplace_back(Family{"common-error-control-orthogonality"});
    auto& f_c5 =
        fams.emplace_back(Family{"local-error-estimate-orthogonality"});
    auto& f_c6 =
        fams.emplace_back(Family{"local-error-control-orthogonality"});
    for (int t = 1; t <= T; ++t) {
      Mat Mm = probe_matrix(seed, id++, t, dxt, 1);
      probes.push_back({&f_c2m, f_c2m.slot("t=" + std::to_string(t)),
                        [&, t, Mm](const Trajectory&, const SplitTrajectory&,
                                   const ProjectionTerms& pt) {
                          return Mm.col(0).dot(pt.zc_tilde[t]);
                        }});
      for (int sig = 1; sig <= t; ++sig) {
        Mat M = probe_matrix(seed, id++, t * 64 + sig, dx0, dxt);
        probes.push_back(
            {&f_c2,
             f_c2.slot("t=" + std::to_string(t) +
                       ",sigma=" + std::to_string(sig)),
             [&, t, sig, M](const Trajectory& traj, const SplitTrajectory&,
                            const ProjectionTerms& pt) {
               return traj.x[sig].head(dx0).dot(M * pt.zc_tilde[t]);
             }});
      }
      Mat M3 = probe_matrix(seed, id++, t, dxt, dxt);
      probes.push_back({&f_c3, f_c3.slot("t=" + std::to_string(t)),
                        [&, t, M3](const Trajectory& traj,
                                   const SplitTrajectory&,
                                   const ProjectionTerms& pt) {
                          return pt.zc_tilde[t].dot(M3 * traj.xhat_c[t]);
                        }});
      if (t <= T - 1) {
        Mat M4 = probe_matrix(seed, id++, t, dut, dxt);
        probes.push_back({&f_c4, f_c4.slot("t=" + std::to_string(t)),
                          [&, t, M4](const Trajectory&,
                                     const SplitTrajectory& sp,
                                     const ProjectionTerms& pt) {
                            return sp.ucom[t].dot(M4 * pt.zc_tilde[t]);
                          }});
      }
      for (int i = 1; i <= n; ++i) {
        Mat M5 = probe_matrix(seed, id++, t, topo.dx[i], topo.dx[i]);
        probes.push_back(
            {&f_c5,
             f_c5.slot("agent=" + std::to_string(i) + ",t=" +
                       std::to_string(t)),
             [&, i, t, M5](const Trajectory& traj, const SplitTrajectory&,
                           const ProjectionTerms& pt) {
               const Vec zl_hat =
                   traj.xhat_i[i - 1][t] -
                   traj.xhat_c[t].segment(xoff(i), topo.dx[i]);
               return pt.zl_tilde[i - 1][t].dot(M5 * zl_hat);
             }});
        if (t <= T - 1) {
          Mat M6 = probe_matrix(seed, id++, t, topo.du[i], topo.dx[i]);
          probes.push_back(
              {&f_c6,
               f_c6.slot("agent=" + std::to_string(i) + ",t=" +
                         std::to_string(t)),
               [&, i, t, M6](const Trajectory&, const SplitTrajectory& sp,
                             const ProjectionTerms& pt) {
                 return sp.uloc[t]
                     .segment(uoff(i), topo.du[i])
                     .dot(M6 * pt.zl_tilde[i - 1][t]);
               }});
        }
      }
    }
  }

  // Regression-based control split is checked on a stored sub-batch for
  // strategies that are affine in the information (the fit is only expected
  // to recover the split in that class).
  bool affine = ctx.strategy.kind != StrategyKind::Optimal;
  if (!affine) {
    affine = !ctx.plans.empty();
    for (const FilterPlan& p : ctx.plans) {
      affine = affine && p.mode == BayesMode::KalmanExact;
    }
  }
  const long n_reg =
      affine && N >= tol::kRegressionMinBatch ? std::min<long>(N, 2000) : 0;
  std::vector<Trajectory> reg_batch;
  reg_batch.reserve(static_cast<std::size_t>(n_reg));

  const long n_bit = std::min<long>(N, 5);    // bitwise re-derivations
  const long n_recon = std::min<long>(N, 10); // reconstruction / replay
  bool measurable_ok = true;
  bool controlfree_ok = true;
  double worst_recon = 0, worst_replay = 0;

  double p1 = 0, p2 = 0;
  for (long k = 0; k < N; ++k) {
    const Trajectory traj = rollout(ctx, seed, k);
    const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
    ProjectionTerms pt;
    if (has_proj) pt = projection_terms(ctx, traj, sp, mode);

    for (int t = 1; t <= T - 1; ++t) {
      p1 = std::max(p1, sp.uloc[t].head(du0).cwiseAbs().maxCoeff());
    }
    for (int t = 1; t <= T; ++t) {
      p2 = std::max(p2, sp.xloc[t].head(dx0).cwiseAbs().maxCoeff());
    }
    for (const Probe& p : probes) {
      p.family->acc[p.slot].add(p.fn(traj, sp, pt));
    }

    if (k < n_bit) {
      // The common part of the information chain must be recomputable from
      // the major agent's record alone.
      std::vector<Vec> x0_hist(T + 1);
      for (int t = 1; t <= T; ++t) x0_hist[t] = traj.x[t].head(dx0);
      CommonFilter cf(s);
      cf.init(x0_hist[1]);
      measurable_ok = measurable_ok && same_bits(cf.xhat(), traj.xhat_c[1]);
      for (int t = 1; t <= T - 1 && measurable_ok; ++t) {
        Vec win;
        if (ctx.strategy.kind == StrategyKind::CustomLinear) {
          win = custom_window(s, x0_hist, t, ctx.strategy.custom.window);
        }
        Vec u0 = ctx.strategy.kind == StrategyKind::CustomLinear
                     ? act_custom_major(ctx.strategy.custom, t, win, cf.xhat())
                     : act_major(s, ctx.sched, t, cf.xhat());
        measurable_ok =
            measurable_ok && same_bits(u0, traj.u[t].head(du0));
        std::vector<Vec> ucom_minors(n);
        for (int i = 1; i <= n; ++i) {
          ucom_minors[i - 1] =
              ctx.strategy.kind == StrategyKind::CustomLinear
                  ? ucom_custom_minor(s, ctx.strategy.custom, t, i, win,
                                      cf.xhat())
                  : ucom_minor(s, ctx.sched, t, i, cf.xhat());
          measurable_ok =
              measurable_ok &&
              same_bits(ucom_minors[i - 1],
                        traj.ucom[t].segment(uoff(i), topo.du[i]));
        }
        cf.step(x0_hist[t + 1], x0_hist[t], Vec(traj.u[t].head(du0)),
                ucom_minors);
        measurable_ok =
            measurable_ok && same_bits(cf.xhat(), traj.xhat_c[t + 1]);
      }
      if (has_proj) {
        const TildeArrays ta = tilde_from_draw(ctx, traj.draw, mode, seed, k);
        for (int t = 1; t <= T && controlfree_ok; ++t) {
          controlfree_ok = controlfree_ok && same_bits(ta.zc[t],
                                                       pt.zc_tilde[t]);
          for (int i = 1; i <= n; ++i) {
            controlfree_ok = controlfree_ok &&
                             same_bits(ta.zl[i - 1][t], pt.zl_tilde[i - 1][t]);
          }
        }
      }
    }
    if (k < n_recon) {
      worst_replay = std::max(worst_replay, replay_residual(s, traj));
      worst_recon = std::max(
          worst_recon, reconstruction_residual(ctx, traj, sp, seed, k));
    }
    if (static_cast<long>(reg_batch.size()) < n_reg) {
      Trajectory copy = traj;
      copy.ucom_exact = false;  // force the regression path
      reg_batch.push_back(std::move(copy));
    }
  }

  CheckReport rep;
  rep.results.push_back(exact_check("major-local-control-zero", p1));
  rep.results.push_back(exact_check("major-local-state-zero", p2));
  rep.results.push_back(
      bitwise_check("common-information-measurable", measurable_ok,
                    "recomputed from the major record on " +
                        std::to_string(n_bit) + " trials"));
  for (const Family& f : fams) rep.results.push_back(family_mc(f));
  if (has_proj) {
    rep.results.push_back(
        bitwise_check("errors-control-free", controlfree_ok,
                      "rebuilt from the primitive draws on " +
                          std::to_string(n_bit) + " trials"));
  }
  rep.results.push_back(CheckResult{
      "information-reconstruction", "exact", worst_recon, tol::kReconstruct,
      worst_recon <= tol::kReconstruct,
      "worst relative deviation over " + std::to_string(n_recon) + " trials"});
  rep.results.push_back(CheckResult{
      "trajectory-replay", "exact", worst_replay, tol::kReplay,
      worst_replay <= tol::kReplay,
      "worst dynamics/observation residual over " + std::to_string(n_recon) +
          " trials"});
  if (n_reg > 0) {
    // The fitted common part deviates from the exposed one by the in-sample
    // projection of the local part, whose batch mean equals the local part's
    // own batch mean; that spread (not the much smaller per-trial spread of
    // the shared fit) is the right yardstick.
    const std::vector<ControlSplit> fit = split_controls(s, reg_batch);
    std::vector<MomentAcc> diff(T), ref(T);
    std::vector<Mat> dirs;
    for (int t = 1; t <= T - 1; ++t) {
      dirs.push_back(probe_matrix(seed, id++, t, dut, 1));
    }
    for (std::size_t k = 0; k < reg_batch.size(); ++k) {
      for (int t = 1; t <= T - 1; ++t) {
        diff[t - 1].add(dirs[t - 1].col(0).dot(fit[k].first[t] -
                                               reg_batch[k].ucom[t]));
        ref[t - 1].add(dirs[t - 1].col(0).dot(reg_batch[k].uloc[t]));
      }
    }
    double worst = 0;
    int arg = 1;
    for (int t = 1; t <= T - 1; ++t) {
      const double md = std::abs(diff[t - 1].mean());
      const double se = ref[t - 1].std_error();
      const double stat =
          md <= tol::kExact ? 0.0 : (se > 0 ? md / se : 1e300);
      if (stat >= worst) {
        worst = stat;
        arg = t;
      }
    }
    rep.results.push_back(
        mc_check("control-split-regression", worst,
                 "worst t=" + std::to_string(arg) + ": mean gap=" +
                     fmt(diff[arg - 1].mean()) + ", local spread se=" +
                     fmt(ref[arg - 1].std_error())));
  }
  return rep;
}

CostReport evaluate_decomposed(const SimContext& ctx, long N,
                               std::uint64_t seed, bool parallel,
                               const TrajectoryObserver& extra) {
  const Scenario& s = *ctx.s;
  const int n = s.topology.n;
  double sum_com = 0, sum_stoc = 0, sum_res = 0;
  std::vector<double> sum_loc(n, 0.0);
  const TrajectoryObserver observer = [&](const Trajectory& traj, long k) {
    const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
    const DecompTerms dt = decomp_terms(s, ctx.sched, traj, sp);
    sum_com += dt.Jcom;
    sum_stoc += dt.Jstoc;
    sum_res += traj.cost - dt.total();
    for (int i = 1; i <= n; ++i) sum_loc[i - 1] += dt.Jloc[i - 1];
    if (extra) extra(traj, k);
  };
  CostReport rep = evaluate(ctx, N, seed, parallel, observer);
  rep.has_decomposition = true;
  rep.Jcom = sum_com / static_cast<double>(N);
  rep.Jstoc = sum_stoc / static_cast<double>(N);
  rep.residual = sum_res / static_cast<double>(N);
  rep.Jloc.resize(n);
  for (int i = 1; i <= n; ++i) rep.Jloc[i - 1] = sum_loc[i - 1] / N;
  return rep;
}

// ---------------------------------------------------------------------------
// Exact checks by enumeration.
// ---------------------------------------------------------------------------

namespace {

void append_bits_of(std::string& key, const Vec& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    double x = v(k);
    if (x == 0.0) x = 0.0;
    char buf[sizeof(double)];
    std::memcpy(buf, &x, sizeof(double));
    key.append(buf, sizeof(double));
  }
}

// Max |probability-weighted conditional mean| of a per-outcome vector.
double cond_mean_max(const ExactLaw& law, const std::vector<int>& cluster,
                     const std::function<Vec(long)>& value) {
  std::unordered_map<int, std::pair<Vec, double>> acc;
  for (long o = 0; o < law.n_outcomes; ++o) {
    const Vec v = value(o);
    auto [it, fresh] =
        acc.try_emplace(cluster[o], Vec::Zero(v.size()), 0.0);
    it->second.first += law.prob[o] * v;
    it->second.second += law.prob[o];
  }
  double worst = 0;
  for (const auto& [c, sv] : acc) {
    worst = std::max(
        worst, (sv.first / sv.second).cwiseAbs().maxCoeff());
  }
  return worst;
}

// Max deviation of a per-outcome vector from its conditional mean.
double cond_spread_max(const ExactLaw& law, const std::vector<int>& cluster,
                       const std::function<Vec(long)>& value) {
  std::unordered_map<int, std::pair<Vec, double>> acc;
  for (long o = 0; o < law.n_outcomes; ++o) {
    const Vec v = value(o);
    auto [it, fresh] =
        acc.try_emplace(cluster[o], Vec::Zero(v.size()), 0.0);
    it->second.first += law.prob[o] * v;
    it->second.second += law.prob[o];
  }
  double worst = 0;
  for (long o = 0; o < law.n_outcomes; ++o) {
    const auto& sv = acc.at(cluster[o]);
    worst = std::max(worst, (value(o) - sv.first / sv.second)
                                .cwiseAbs()
                                .maxCoeff());
  }
  return worst;
}

double expect(const ExactLaw& law, const std::function<double(long)>& f) {
  double sum = 0;
  for (long o = 0; o < law.n_outcomes; ++o) sum += law.prob[o] * f(o);
  return sum;
}

// Exact factorization of the conditional joint law of two per-outcome path
// keys within every conditioning class.
double factorization_gap(const ExactLaw& law, const std::vector<int>& cluster,
                         const std::vector<std::string>& key_a,
                         const std::vector<std::string>& key_b) {
  struct Cell {
    std::unordered_map<std::string, double> pa, pb, pab;
    double mass = 0;
  };
  std::unordered_map<int, Cell> cells;
  for (long o = 0; o < law.n_outcomes; ++o) {
    Cell& c = cells[cluster[o]];
    c.pa[key_a[o]] += law.prob[o];
    c.pb[key_b[o]] += law.prob[o];
    c.pab[key_a[o] + "\x1f" + key_b[o]] += law.prob[o];
    c.mass += law.prob[o];
  }
  double worst = 0;
  for (const auto& [id, c] : cells) {
    for (const auto& [ka, pa] : c.pa) {
      for (const auto& [kb, pb] : c.pb) {
        const auto it = c.pab.find(ka + "\x1f" + kb);
        const double joint = it == c.pab.end() ? 0.0 : it->second;
        worst = std::max(
            worst, std::abs(joint / c.mass - (pa / c.mass) * (pb / c.mass)));
      }
    }
  }
  return worst;
}

}  // namespace

CheckReport oracle_exact_checks(const Scenario& s) {
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const ExactLaw law = oracle_enumerate(s);
  const GainSchedule g = solve_schedules(s);
  const long no = law.n_outcomes;

  const OracleStrategy canonical = oracle_canonical_strategy(s, g);
  const OracleEval ev =
      oracle_evaluate(law, canonical, OracleEstimates::ConditionalMean);
  const OracleEval evl =
      oracle_evaluate(law, canonical, OracleEstimates::LinearProjection);

  std::vector<SplitTrajectory> spc(no), spl(no);
  std::vector<ProjectionTerms> ptc(no), ptl(no);
  std::vector<DecompTerms> dtc(no), dtl(no);
  for (long o = 0; o < no; ++o) {
    spc[o] = propagate_splits(s, ev.trajs[o], ev.trajs[o].ucom,
                              ev.trajs[o].uloc);
    spl[o] = propagate_splits(s, evl.trajs[o], evl.trajs[o].ucom,
                              evl.trajs[o].uloc);
    ptc[o] = projection_terms_core(s, g, ev.trajs[o], spc[o],
                                   EstimateMode::ConditionalMean);
    ptl[o] = projection_terms_core(s, g, evl.trajs[o], spl[o],
                                   EstimateMode::LinearProjection);
    dtc[o] = decomp_terms(s, g, ev.trajs[o], spc[o]);
    dtl[o] = decomp_terms(s, g, evl.trajs[o], spl[o]);
  }

  CheckReport rep;
  {
    double psum = 0;
    for (long o = 0; o < no; ++o) psum += law.prob[o];
    rep.results.push_back(exact_check(
        "probability-normalization", std::abs(psum - 1.0),
        std::to_string(no) + " outcomes"));
  }

  // The recorded common parts (exact conditional means) must coincide with
  // the strategy's own gain form acting on the common estimate.
  {
    double worst = 0;
    for (long o = 0; o < no; ++o) {
      const Trajectory& traj = ev.trajs[o];
      for (int t = 1; t <= T - 1; ++t) {
        Vec cf(topo.du_total());
        cf.head(topo.du[0]) = act_major(s, g, t, traj.xhat_c[t]);
        for (int i = 1; i <= n; ++i) {
          cf.segment(topo.u_offset(i), topo.du[i]) =
              ucom_minor(s, g, t, i, traj.xhat_c[t]);
        }
        worst = std::max(worst,
                         (traj.ucom[t] - cf).cwiseAbs().maxCoeff());
      }
    }
    rep.results.push_back(exact_check("common-control-closed-form", worst));
  }

  // Zero major-agent components of the local split.
  {
    double p1 = 0, p2 = 0;
    for (long o = 0; o < no; ++o) {
      for (int t = 1; t <= T - 1; ++t) {
        p1 = std::max(
            p1, spc[o].uloc[t].head(topo.du[0]).cwiseAbs().maxCoeff());
      }
      for (int t = 1; t <= T; ++t) {
        p2 = std::max(
            p2, spc[o].xloc[t].head(topo.dx[0]).cwiseAbs().maxCoeff());
      }
    }
    rep.results.push_back(exact_check("major-local-control-zero", p1));
    rep.results.push_back(exact_check("major-local-state-zero", p2));
  }

  // Conditional zeros of the local components, current and delayed.
  {
    double wu = 0, wx = 0;
    for (int t = 1; t <= T; ++t) {
      for (int tau = 1; tau <= t; ++tau) {
        for (int i = 1; i <= n; ++i) {
          if (tau <= T - 1) {
            wu = std::max(
                wu, cond_mean_max(law, law.common_group[t], [&](long o) {
                  return Vec(spc[o].uloc[tau].segment(topo.u_offset(i),
                                                      topo.du[i]));
                }));
          }
          wx = std::max(
              wx, cond_mean_max(law, law.common_group[t], [&](long o) {
                return Vec(spc[o].xloc[tau].segment(topo.x_offset(i),
                                                    topo.dx[i]));
              }));
        }
      }
    }
    rep.results.push_back(exact_check("local-control-conditional-zero", wu));
    rep.results.push_back(exact_check("local-state-conditional-zero", wx));
  }

  // Unconditional moments.
  {
    double w5 = 0, w3 = 0, w9 = 0, w10 = 0, w11 = 0;
    std::uint64_t id = 0;
    for (int t = 1; t <= T; ++t) {
      if (t <= T - 1) {
        const Mat M = probe_matrix(1, id++, t, topo.du_total(),
                                   topo.du_total());
        w3 = std::max(w3, std::abs(expect(law, [&](long o) {
                        return spc[o].ucom[t].dot(M * spc[o].uloc[t]);
                      })));
      }
      for (int i = 1; i <= n; ++i) {
        if (t <= T - 1) {
          Vec mu = Vec::Zero(topo.du[i]);
          for (long o = 0; o < no; ++o) {
            mu += law.prob[o] *
                  spc[o].uloc[t].segment(topo.u_offset(i), topo.du[i]);
          }
          w5 = std::max(w5, mu.cwiseAbs().maxCoeff());
          const Mat M11 = probe_matrix(1, id++, t, topo.du[i], topo.dx[0]);
          w11 = std::max(w11, std::abs(expect(law, [&](long o) {
                          return spc[o]
                              .uloc[t]
                              .segment(topo.u_offset(i), topo.du[i])
                              .dot(M11 * spc[o].xstoc[t].head(topo.dx[0]));
                        })));
        }
        const Mat M9 = probe_matrix(1, id++, t, topo.dx[i], topo.dx[0]);
        w9 = std::max(w9, std::abs(expect(law, [&](long o) {
                        return spc[o]
                            .xloc[t]
                            .segment(topo.x_offset(i), topo.dx[i])
                            .dot(M9 * spc[o].xstoc[t].head(topo.dx[0]));
                      })));
        const Mat M10 = probe_matrix(1, id++, t, topo.dx[i],
                                     topo.dx_total());
        w10 = std::max(w10, std::abs(expect(law, [&](long o) {
                         return spc[o]
                             .xloc[t]
                             .segment(topo.x_offset(i), topo.dx[i])
                             .dot(M10 * spc[o].xcom[t]);
                       })));
      }
    }
    rep.results.push_back(exact_check("control-split-orthogonality", w3));
    rep.results.push_back(exact_check("local-control-zero-mean", w5));
    rep.results.push_back(
        exact_check("local-state-stochastic-major-orthogonality", w9));
    rep.results.push_back(
        exact_check("local-state-common-state-orthogonality", w10));
    rep.results.push_back(
        exact_check("local-control-stochastic-major-orthogonality", w11));
  }

  // The common component is determined by the conditioning class.
  {
    double worst = 0;
    for (int t = 1; t <= T; ++t) {
      worst = std::max(
          worst, cond_spread_max(law, law.common_group[t],
                                 [&](long o) { return spc[o].xcom[t]; }));
    }
    rep.results.push_back(exact_check("common-component-measurable", worst));
  }

  // Estimation-error properties, in both estimate modes.
  {
    const char* suffix[2] = {"", "-linear"};
    const std::vector<ProjectionTerms>* pts[2] = {&ptc, &ptl};
    const std::vector<SplitTrajectory>* sps[2] = {&spc, &spl};
    const OracleEval* evs[2] = {&ev, &evl};
    for (int v = 0; v < 2; ++v) {
      const auto& pt = *pts[v];
      const auto& sp = *sps[v];
      const auto& trajs = evs[v]->trajs;
      double w2 = 0, w3 = 0, w4 = 0, w5 = 0, w6 = 0;
      std::uint64_t id = 1000 + static_cast<std::uint64_t>(v);
      for (int t = 1; t <= T; ++t) {
        w2 = std::max(w2,
                      cond_mean_max(law, law.common_group[t], [&](long o) {
                        return pt[o].zc_tilde[t];
                      }));
        const Mat M3 = probe_matrix(2, id + 7 * static_cast<std::uint64_t>(t),
                                    t, topo.dx_total(), topo.dx_total());
        w3 = std::max(w3, std::abs(expect(law, [&](long o) {
                        return pt[o].zc_tilde[t].dot(M3 *
                                                     trajs[o].xhat_c[t]);
                      })));
        if (t <= T - 1) {
          const Mat M4 =
              probe_matrix(3, id + 7 * static_cast<std::uint64_t>(t), t,
                           topo.du_total(), topo.dx_total());
          w4 = std::max(w4, std::abs(expect(law, [&](long o) {
                          return sp[o].ucom[t].dot(M4 * pt[o].zc_tilde[t]);
                        })));
        }
        for (int i = 1; i <= n; ++i) {
          const Mat M5 =
              probe_matrix(4, id + 13 * static_cast<std::uint64_t>(t) +
                                  static_cast<std::uint64_t>(i),
                           t, topo.dx[i], topo.dx[i]);
          w5 = std::max(w5, std::abs(expect(law, [&](long o) {
                          const Vec zl_hat =
                              trajs[o].xhat_i[i - 1][t] -
                              trajs[o].xhat_c[t].segment(topo.x_offset(i),
                                                         topo.dx[i]);
                          return pt[o].zl_tilde[i - 1][t].dot(M5 * zl_hat);
                        })));
          if (t <= T - 1) {
            const Mat M6 =
                probe_matrix(5, id + 13 * static_cast<std::uint64_t>(t) +
                                    static_cast<std::uint64_t>(i),
                             t, topo.du[i], topo.dx[i]);
            w6 = std::max(w6, std::abs(expect(law, [&](long o) {
                            return sp[o]
                                .uloc[t]
                                .segment(topo.u_offset(i), topo.du[i])
                                .dot(M6 * pt[o].zl_tilde[i - 1][t]);
                          })));
          }
        }
      }
      rep.results.push_back(exact_check(
          std::string("common-error-conditional-zero") + suffix[v], w2));
      rep.results.push_back(exact_check(
          std::string("common-error-estimate-orthogonality") + suffix[v],
          w3));
      rep.results.push_back(exact_check(
          std::string("common-error-control-orthogonality") + suffix[v], w4));
      rep.results.push_back(exact_check(
          std::string("local-error-estimate-orthogonality") + suffix[v], w5));
      rep.results.push_back(exact_check(
          std::string("local-error-control-orthogonality") + suffix[v], w6));
    }
  }

  // The error variables must not depend on the strategy.
  {
    const OracleStrategy null_strategy =
        [&](int, long, const Vec&, const std::vector<Vec>&, const Vec&) {
          return Vec(Vec::Zero(topo.du_total()));
        };
    const OracleEval ev0 =
        oracle_evaluate(law, null_strategy, OracleEstimates::ConditionalMean);
    bool same = true;
    for (long o = 0; o < no && same; ++o) {
      const SplitTrajectory sp0 = propagate_splits(
          s, ev0.trajs[o], ev0.trajs[o].ucom, ev0.trajs[o].uloc);
      const ProjectionTerms pt0 = projection_terms_core(
          s, g, ev0.trajs[o], sp0, EstimateMode::ConditionalMean);
      for (int t = 1; t <= T && same; ++t) {
        same = same && same_bits(pt0.zc_tilde[t], ptc[o].zc_tilde[t]);
        for (int i = 1; i <= n; ++i) {
          same = same &&
                 same_bits(pt0.zl_tilde[i - 1][t], ptc[o].zl_tilde[i - 1][t]);
        }
      }
    }
    rep.results.push_back(bitwise_check(
        "errors-control-free", same,
        "error variables identical under the canonical and null strategies"));
  }

  // Per-step cost split.
  {
    double wx = 0, wu = 0;
    for (int t = 1; t <= T; ++t) {
      const Mat& Qt = t == T ? s.cost.QT : s.cost.Q;
      const double gap = expect(law, [&](long o) {
        const Trajectory& traj = ev.trajs[o];
        double lhs = traj.x[t].dot(Qt * traj.x[t]);
        double rhs = spc[o].zcom[t].dot(Qt * spc[o].zcom[t]);
        for (int i = 1; i <= n; ++i) {
          const Mat Qii = t == T ? s.QTii(i) : s.Qii(i);
          rhs += spc[o].zloc[i - 1][t].dot(Qii * spc[o].zloc[i - 1][t]);
          const Vec xsi =
              spc[o].xstoc[t].segment(topo.x_offset(i), topo.dx[i]);
          rhs -= xsi.dot(Qii * xsi);
        }
        return lhs - rhs;
      });
      wx = std::max(wx, std::abs(gap));
    }
    for (int t = 1; t <= T - 1; ++t) {
      const double gap = expect(law, [&](long o) {
        const Trajectory& traj = ev.trajs[o];
        double lhs = traj.u[t].dot(s.cost.R * traj.u[t]);
        double rhs = spc[o].ucom[t].dot(s.cost.R * spc[o].ucom[t]);
        for (int i = 1; i <= n; ++i) {
          const Vec ul =
              spc[o].uloc[t].segment(topo.u_offset(i), topo.du[i]);
          rhs += ul.dot(s.Rii(i) * ul);
        }
        return lhs - rhs;
      });
      wu = std::max(wu, std::abs(gap));
    }
    rep.results.push_back(exact_check("state-cost-split", wx));
    rep.results.push_back(exact_check("control-cost-split", wu));
  }

  // Total decomposition and its refinement, in both estimate modes.
  {
    const double total = expect(law, [&](long o) { return ev.trajs[o].cost; });
    const double parts =
        expect(law, [&](long o) { return dtc[o].total(); });
    rep.results.push_back(exact_check(
        "cost-decomposition", std::abs(total - parts),
        "cost=" + fmt(total) + ", parts=" + fmt(parts)));

    const char* suffix[2] = {"", "-linear"};
    const std::vector<ProjectionTerms>* pts[2] = {&ptc, &ptl};
    const std::vector<DecompTerms>* dts[2] = {&dtc, &dtl};
    for (int v = 0; v < 2; ++v) {
      const auto& pt = *pts[v];
      const auto& dt = *dts[v];
      const double com_gap = std::abs(expect(law, [&](long o) {
        return dt[o].Jcom - pt[o].Jcom_hat - pt[o].Jcom_tilde;
      }));
      double loc_gap = 0;
      for (int i = 1; i <= n; ++i) {
        loc_gap = std::max(loc_gap, std::abs(expect(law, [&](long o) {
                             return dt[o].Jloc[i - 1] -
                                    pt[o].Jloc_hat[i - 1] -
                                    pt[o].Jloc_tilde[i - 1];
                           })));
      }
      const double com_hat =
          expect(law, [&](long o) { return pt[o].Jcom_hat; });
      double loc_hat = 0;
      for (int i = 1; i <= n; ++i) {
        loc_hat = std::max(loc_hat, expect(law, [&](long o) {
                    return pt[o].Jloc_hat[i - 1];
                  }));
      }
      rep.results.push_back(exact_check(
          std::string("common-cost-projection-split") + suffix[v], com_gap));
      rep.results.push_back(exact_check(
          std::string("local-cost-projection-split") + suffix[v], loc_gap));
      rep.results.push_back(exact_check(
          std::string("common-estimate-cost-zero") + suffix[v],
          std::abs(com_hat)));
      rep.results.push_back(exact_check(
          std::string("local-estimate-cost-zero") + suffix[v], loc_hat));
    }
  }

  // Conditional independence of distinct minor agents, as an exact
  // factorization of path laws within every common class.
  if (n >= 2) {
    double worst = 0, worst_stoc = 0;
    std::vector<std::vector<std::string>> pkey(
        n, std::vector<std::string>(no));
    std::vector<std::vector<std::string>> skey(
        n, std::vector<std::string>(no));
    for (int t = 1; t <= T; ++t) {
      for (int i = 1; i <= n; ++i) {
        for (long o = 0; o < no; ++o) {
          append_bits_of(pkey[i - 1][o],
                         ev.trajs[o].x[t].segment(topo.x_offset(i),
                                                  topo.dx[i]));
          if (t <= T - 1) {
            append_bits_of(pkey[i - 1][o],
                           ev.trajs[o].u[t].segment(topo.u_offset(i),
                                                    topo.du[i]));
          }
          append_bits_of(skey[i - 1][o], law.xw[o][i][t]);
        }
      }
      for (int i = 1; i <= n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
          worst = std::max(
              worst, factorization_gap(law, law.common_group[t],
                                       pkey[i - 1], pkey[j - 1]));
          worst_stoc = std::max(
              worst_stoc, factorization_gap(law, law.common_group[t],
                                            skey[i - 1], skey[j - 1]));
        }
      }
    }
    rep.results.push_back(CheckResult{
        "conditional-independence-factorization", "exact", worst,
        tol::kFactorization, worst <= tol::kFactorization, ""});
    rep.results.push_back(CheckResult{
        "stochastic-conditional-independence", "exact", worst_stoc,
        tol::kFactorization, worst_stoc <= tol::kFactorization, ""});
  }

  // Production filters against the enumerated law.
  {
    double worst_bayes = 0;
    bool any_bayes = false;
    for (int i = 1; i <= n; ++i) {
      FilterPlan plan;
      try {
        plan = make_filter_plan(s, i, BayesModeOverride::Auto);
      } catch (const Error&) {
        continue;  // no density filter available for this block
      }
      any_bayes = true;
      for (long o = 0; o < no; ++o) {
        BayesFilter f(plan, 0, 0);
        worst_bayes =
            std::max(worst_bayes,
                     (f.mean() - ev.trajs[o].xw_hat_bayes[i - 1][1])
                         .cwiseAbs()
                         .maxCoeff());
        for (int t = 2; t <= T; ++t) {
          f.step(t, law.yw[o][i - 1][t]);
          worst_bayes =
              std::max(worst_bayes,
                       (f.mean() - ev.trajs[o].xw_hat_bayes[i - 1][t])
                           .cwiseAbs()
                           .maxCoeff());
        }
      }
    }
    if (any_bayes) {
      rep.results.push_back(
          exact_check("bayes-posterior-enumeration", worst_bayes,
                      "density filter vs enumerated conditional means"));
    }

    double worst_lin = 0;
    for (int i = 1; i <= n; ++i) {
      const FilterSchedule fs = filter_schedule(s, i);
      for (long o = 0; o < no; ++o) {
        LlmsFilter f(s.sys.Aii[i - 1], s.sys.Cii[i - 1], &fs);
        worst_lin = std::max(worst_lin,
                             (f.mean() - evl.trajs[o].xw_hat_llms[i - 1][1])
                                 .cwiseAbs()
                                 .maxCoeff());
        for (int t = 2; t <= T; ++t) {
          f.step(t, law.yw[o][i - 1][t]);
          worst_lin =
              std::max(worst_lin,
                       (f.mean() - evl.trajs[o].xw_hat_llms[i - 1][t])
                           .cwiseAbs()
                           .maxCoeff());
        }
      }
    }
    rep.results.push_back(
        exact_check("linear-filter-enumeration", worst_lin,
                    "gain-recursion filter vs exact projections"));
  }

  return rep;
}

}  // namespace mmlq
