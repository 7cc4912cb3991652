#include "mmlq/splitting.hpp"

#include <cmath>
#include <ostream>

#include "mmlq/errors.hpp"
#include "mmlq/tolerances.hpp"

namespace mmlq {

namespace {

// Least-squares control split: regress u(t) on [1; x0(1:t); u0(1:t-1)].
std::vector<ControlSplit> split_by_regression(
    const Scenario& s, const std::vector<Trajectory>& batch) {
  if (static_cast<long>(batch.size()) < tol::kRegressionMinBatch) {
    throw validation_error(
        "control split by regression needs at least " +
        std::to_string(tol::kRegressionMinBatch) + " trajectories, got " +
        std::to_string(batch.size()));
  }
  const AgentTopology& topo = s.topology;
  const int dx0 = topo.dx[0];
  const int du0 = topo.du[0];
  const Eigen::Index dut = topo.du_total();

  std::vector<ControlSplit> out(batch.size());
  for (auto& split : out) {
    split.first.assign(s.T, Vec());
    split.second.assign(s.T, Vec());
  }

  for (int t = 1; t <= s.T - 1; ++t) {
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(t) * dx0 +
                           static_cast<Eigen::Index>(t - 1) * du0;
    auto regressor = [&](const Trajectory& traj) {
      Vec z(p);
      z(0) = 1;
      Eigen::Index at = 1;
      for (int tau = 1; tau <= t; ++tau, at += dx0) {
        z.segment(at, dx0) = traj.x[tau].head(dx0);
      }
      for (int tau = 1; tau <= t - 1; ++tau, at += du0) {
        z.segment(at, du0) = traj.u[tau].head(du0);
      }
      return z;
    };

    Mat gram = Mat::Zero(p, p);
    Mat cross = Mat::Zero(p, dut);
    for (const Trajectory& traj : batch) {
      const Vec z = regressor(traj);
      gram.noalias() += z * z.transpose();
      cross.noalias() += z * traj.u[t].transpose();
    }
    // Small ridge keeps collinear regressors (e.g. u0 deterministic in x0)
    // solvable without moving the fit.
    gram.diagonal().array() += 1e-10 * std::max(1.0, gram.trace() / p);
    const Mat theta_t = solve_spd(gram, cross, "control-split regression");

    for (std::size_t k = 0; k < batch.size(); ++k) {
      const Vec z = regressor(batch[k]);
      out[k].first[t] = theta_t.transpose() * z;
      out[k].second[t] = batch[k].u[t] - out[k].first[t];
    }
  }
  return out;
}

}  // namespace

std::vector<ControlSplit> split_controls(const Scenario& s,
                                         const std::vector<Trajectory>& batch) {
  if (batch.empty()) return {};
  bool exact = true;
  for (const Trajectory& traj : batch) exact = exact && traj.ucom_exact;
  if (!exact) return split_by_regression(s, batch);

  std::vector<ControlSplit> out;
  out.reserve(batch.size());
  for (const Trajectory& traj : batch) {
    out.emplace_back(traj.ucom, traj.uloc);
  }
  return out;
}

SplitTrajectory propagate_splits(const Scenario& s, const Trajectory& traj,
                                 const std::vector<Vec>& ucom,
                                 const std::vector<Vec>& uloc) {
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const Eigen::Index dxt = topo.dx_total();
  auto [A, B] = assemble_global(s);

  SplitTrajectory sp;
  sp.ucom = ucom;
  sp.uloc = uloc;
  sp.xcom.assign(T + 1, Vec());
  sp.xloc.assign(T + 1, Vec());
  sp.xstoc.assign(T + 1, Vec());
  sp.zcom.assign(T + 1, Vec());
  sp.ycom.assign(n, std::vector<Vec>(T + 1));
  sp.yloc.assign(n, std::vector<Vec>(T + 1));
  sp.ystoc.assign(n, std::vector<Vec>(T + 1));
  sp.zloc.assign(n, std::vector<Vec>(T + 1));

  sp.xcom[1] = Vec::Zero(dxt);
  sp.xloc[1] = Vec::Zero(dxt);
  sp.xstoc[1] = traj.x[1];

  for (int t = 1; t <= T; ++t) {
    if (t >= 2) {
      Vec w(dxt);
      for (int i = 0; i <= n; ++i) {
        w.segment(topo.x_offset(i), topo.dx[i]) = traj.draw.w[i][t - 1];
      }
      sp.xcom[t] = A * sp.xcom[t - 1] + B * ucom[t - 1];
      sp.xloc[t] = A * sp.xloc[t - 1] + B * uloc[t - 1];
      sp.xstoc[t] = A * sp.xstoc[t - 1] + w;
    }
    const Vec sum = sp.xcom[t] + sp.xloc[t] + sp.xstoc[t];
    const double resid = (traj.x[t] - sum).lpNorm<Eigen::Infinity>();
    const double scale =
        std::max(1.0, traj.x[t].lpNorm<Eigen::Infinity>());
    if (resid > tol::kReconstruct * scale) {
      throw numerical_error(
          "state split does not reconstruct the trajectory at t = " +
          std::to_string(t) + " (residual " + std::to_string(resid) + ")");
    }
    sp.zcom[t] = sp.xcom[t] + sp.xstoc[t];
    for (int i = 1; i <= n; ++i) {
      const Mat& C = s.sys.Cii[i - 1];
      const auto seg = [&](const std::vector<Vec>& xs) {
        return xs[t].segment(topo.x_offset(i), topo.dx[i]);
      };
      sp.ycom[i - 1][t] = C * seg(sp.xcom);
      sp.yloc[i - 1][t] = C * seg(sp.xloc);
      sp.ystoc[i - 1][t] = C * seg(sp.xstoc) + traj.draw.v[i - 1][t];
      sp.zloc[i - 1][t] = seg(sp.xloc) + seg(sp.xstoc);
    }
  }
  return sp;
}

double reconstruction_residual(const SimContext& ctx, const Trajectory& traj,
                               const SplitTrajectory& split,
                               std::uint64_t seed, std::uint64_t trial) {
  const Scenario& s = *ctx.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const StrategyKind kind = ctx.strategy.kind;
  const bool use_bayes = kind == StrategyKind::Optimal;

  // Rebuild everything from xstoc_0(1:t) and ystoc_i(1:t) only.
  std::vector<Vec> xstoc0(T + 1);
  for (int t = 1; t <= T; ++t) {
    xstoc0[t] = split.xstoc[t].head(topo.dx[0]);
  }

  // Major-coupling part of each minor agent's stochastic component, driven by
  // xstoc_0: m_i(1) = 0, m_i(t+1) = A_ii m_i(t) + A_i0 xstoc_0(t).
  std::vector<std::vector<Vec>> m(n, std::vector<Vec>(T + 1));
  for (int i = 1; i <= n; ++i) {
    m[i - 1][1] = Vec::Zero(topo.dx[i]);
    for (int t = 1; t <= T - 1; ++t) {
      m[i - 1][t + 1] =
          s.sys.Aii[i - 1] * m[i - 1][t] + s.sys.Ai0[i - 1] * xstoc0[t];
    }
  }

  std::vector<BayesFilter> bayes;
  std::vector<LlmsFilter> llms;
  for (int i = 1; i <= n; ++i) {
    if (use_bayes) bayes.emplace_back(ctx.plans[i - 1], seed, trial);
    if (kind == StrategyKind::BestLinear || kind == StrategyKind::CustomLinear) {
      llms.emplace_back(s.sys.Aii[i - 1], s.sys.Cii[i - 1],
                        &ctx.fsched[i - 1]);
    }
  }
  auto xw_estimate = [&](int i, int t, const Vec& yw) -> Vec {
    switch (kind) {
      case StrategyKind::Optimal:
        return bayes[i - 1].mean();
      case StrategyKind::BestLinear:
      case StrategyKind::CustomLinear:
        return llms[i - 1].mean();
      case StrategyKind::StateFeedback:
        return t == 1 ? Vec::Zero(topo.dx[i]) : yw;  // C = I, v = 0
    }
    return Vec::Zero(topo.dx[i]);
  };

  CommonFilter common(s);
  common.init(xstoc0[1]);

  std::vector<Vec> xcom(T + 1), xloc(T + 1), x0_hist(T + 1);
  xcom[1] = Vec::Zero(topo.dx_total());
  xloc[1] = Vec::Zero(topo.dx_total());
  x0_hist[1] = xstoc0[1];

  double worst = 0;
  auto compare = [&worst](const Vec& rebuilt, const Vec& reference) {
    const double scale =
        std::max(1.0, reference.lpNorm<Eigen::Infinity>());
    worst = std::max(worst,
                     (rebuilt - reference).lpNorm<Eigen::Infinity>() / scale);
  };

  auto [A, B] = assemble_global(s);
  compare(x0_hist[1], traj.x[1].head(topo.dx[0]));

  for (int t = 1; t <= T; ++t) {
    // Rebuild each minor agent's observation and private estimate.
    std::vector<Vec> xw_hat(n);
    for (int i = 1; i <= n; ++i) {
      const Vec yw = split.ystoc[i - 1][t] - s.sys.Cii[i - 1] * m[i - 1][t];
      if (t >= 2) {
        if (use_bayes) bayes[i - 1].step(t, yw);
        if (kind == StrategyKind::BestLinear ||
            kind == StrategyKind::CustomLinear) {
          llms[i - 1].step(t, yw);
        }
      }
      xw_hat[i - 1] = xw_estimate(i, t, yw);
      const Vec y_rebuilt =
          s.sys.Cii[i - 1] *
              (xcom[t] + xloc[t]).segment(topo.x_offset(i), topo.dx[i]) +
          split.ystoc[i - 1][t];
      compare(y_rebuilt, traj.y[i - 1][t]);
    }
    if (t == T) break;

    // Rebuild the actions.
    const Vec xhat_c = common.xhat();
    Vec win;
    if (kind == StrategyKind::CustomLinear) {
      win = custom_window(s, x0_hist, t, ctx.strategy.custom.window);
    }
    Vec u0;
    if (kind == StrategyKind::CustomLinear) {
      u0 = act_custom_major(ctx.strategy.custom, t, win, xhat_c);
    } else {
      u0 = act_major(s, ctx.sched, t, xhat_c);
    }
    compare(u0, traj.u[t].head(topo.du[0]));

    Vec ucom_t(topo.du_total()), uloc_t(topo.du_total());
    ucom_t.head(topo.du[0]) = u0;
    uloc_t.head(topo.du[0]).setZero();
    std::vector<Vec> ucom_minors(n);
    for (int i = 1; i <= n; ++i) {
      Vec uci;
      if (kind == StrategyKind::CustomLinear) {
        uci = ucom_custom_minor(s, ctx.strategy.custom, t, i, win, xhat_c);
      } else {
        uci = ucom_minor(s, ctx.sched, t, i, xhat_c);
      }
      Vec uli;
      const Vec zloc_hat =
          xloc[t].segment(topo.x_offset(i), topo.dx[i]) + xw_hat[i - 1];
      if (kind == StrategyKind::CustomLinear) {
        const Vec xg_i = (xcom[t] + xloc[t])
                             .segment(topo.x_offset(i), topo.dx[i]) +
                         m[i - 1][t];
        const Vec ui = act_custom_minor(ctx.strategy.custom, t, i, win, xhat_c,
                                        xg_i + xw_hat[i - 1]);
        uli = ui - uci;
      } else {
        uli = -(ctx.sched.Lloc[i - 1][t] * zloc_hat);
      }
      compare(uci + uli,
              traj.u[t].segment(topo.u_offset(i), topo.du[i]));
      ucom_t.segment(topo.u_offset(i), topo.du[i]) = uci;
      uloc_t.segment(topo.u_offset(i), topo.du[i]) = uli;
      ucom_minors[i - 1] = uci;
    }

    // Advance the rebuilt components and the common filter.
    xcom[t + 1] = A * xcom[t] + B * ucom_t;
    xloc[t + 1] = A * xloc[t] + B * uloc_t;
    x0_hist[t + 1] = xcom[t + 1].head(topo.dx[0]) + xstoc0[t + 1];
    compare(x0_hist[t + 1], traj.x[t + 1].head(topo.dx[0]));
    common.step(x0_hist[t + 1], x0_hist[t], u0, ucom_minors);
  }
  return worst;
}

void write_split_csv(std::ostream& out, const Scenario& s,
                     const SplitTrajectory& split) {
  out << "t,component,agent,entry,value\n";
  const AgentTopology& topo = s.topology;
  auto emit_stacked = [&](const char* name, const std::vector<Vec>& xs,
                          int t_max) {
    for (int t = 1; t <= t_max; ++t) {
      if (xs[t].size() == 0) continue;
      for (int i = 0; i <= topo.n; ++i) {
        const bool control = name[0] == 'u';
        const int off = control ? topo.u_offset(i) : topo.x_offset(i);
        const int dim = control ? topo.du[i] : topo.dx[i];
        for (int e = 0; e < dim; ++e) {
          out << t << ',' << name << ',' << i << ',' << e << ','
              << xs[t](off + e) << '\n';
        }
      }
    }
  };
  emit_stacked("ucom", split.ucom, s.T - 1);
  emit_stacked("uloc", split.uloc, s.T - 1);
  emit_stacked("xcom", split.xcom, s.T);
  emit_stacked("xloc", split.xloc, s.T);
  emit_stacked("xstoc", split.xstoc, s.T);
  emit_stacked("zcom", split.zcom, s.T);
  for (int i = 1; i <= topo.n; ++i) {
    for (int t = 1; t <= s.T; ++t) {
      for (const auto& [name, arr] :
           {std::pair<const char*, const std::vector<std::vector<Vec>>*>(
                "ycom", &split.ycom),
            {"yloc", &split.yloc},
            {"ystoc", &split.ystoc},
            {"zloc", &split.zloc}}) {
        const Vec& val = (*arr)[i - 1][t];
        for (int e = 0; e < val.size(); ++e) {
          out << t << ',' << name << ',' << i << ',' << e << ',' << val(e)
              << '\n';
        }
      }
    }
  }
}

}  // namespace mmlq
