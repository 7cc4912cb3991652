#include "mmlq/simulation.hpp"

#include <cmath>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "mmlq/errors.hpp"

namespace mmlq {

PrimitiveDraw draw_primitives(const Scenario& s, std::uint64_t seed,
                              std::uint64_t trial) {
  const AgentTopology& topo = s.topology;
  PrimitiveDraw d;
  d.x1.resize(topo.n + 1);
  d.w.assign(topo.n + 1, {});
  d.v.assign(topo.n, {});
  for (int i = 0; i <= topo.n; ++i) {
    d.x1[i] = s.noise.x1[i].sample(
        rng::Stream(seed, trial, 0, static_cast<std::uint64_t>(i), 0));
    d.w[i].assign(s.T, Vec());  // slots 1..T-1
    for (int t = 1; t <= s.T - 1; ++t) {
      d.w[i][t] = s.noise.w[i].sample(
          rng::Stream(seed, trial, 1, static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(t)));
    }
  }
  for (int i = 1; i <= topo.n; ++i) {
    d.v[i - 1].assign(s.T + 1, Vec());  // slots 1..T
    for (int t = 1; t <= s.T; ++t) {
      d.v[i - 1][t] = s.noise.v[i - 1].sample(
          rng::Stream(seed, trial, 2, static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(t)));
    }
  }
  return d;
}

bool context_needs_bayes(const Strategy& st, bool run_all_filters) {
  return run_all_filters || st.kind == StrategyKind::Optimal;
}

bool context_needs_llms(const Strategy& st, bool run_all_filters) {
  return run_all_filters || st.kind == StrategyKind::BestLinear ||
         st.kind == StrategyKind::CustomLinear;
}

SimContext make_context(const Scenario& s, Strategy strategy,
                        BayesModeOverride ov, bool run_all_filters) {
  SimContext ctx;
  ctx.s = &s;
  ctx.strategy = std::move(strategy);
  ctx.run_all_filters = run_all_filters;
  if (ctx.strategy.kind == StrategyKind::StateFeedback) {
    require_state_feedback(s);
  }
  if (ctx.strategy.kind == StrategyKind::CustomLinear) {
    validate_custom_gains(s, ctx.strategy.custom);
  }
  ctx.sched = solve_schedules(s);
  for (int i = 1; i <= s.topology.n; ++i) {
    ctx.fsched.push_back(filter_schedule(s, i));
  }
  if (context_needs_bayes(ctx.strategy, run_all_filters)) {
    for (int i = 1; i <= s.topology.n; ++i) {
      ctx.plans.push_back(make_filter_plan(s, i, ov));
    }
  }
  return ctx;
}

Trajectory rollout(const SimContext& ctx, std::uint64_t seed,
                   std::uint64_t trial) {
  const Scenario& s = *ctx.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const int dxt = topo.dx_total();
  const int dut = topo.du_total();
  const bool use_bayes = context_needs_bayes(ctx.strategy, ctx.run_all_filters);
  const bool use_llms = context_needs_llms(ctx.strategy, ctx.run_all_filters);

  Trajectory traj;
  traj.draw = draw_primitives(s, seed, trial);
  const PrimitiveDraw& d = traj.draw;

  traj.x.assign(T + 1, Vec());
  traj.u.assign(T, Vec());
  traj.xhat_c.assign(T + 1, Vec());
  traj.ucom.assign(T, Vec());
  traj.uloc.assign(T, Vec());
  traj.y.assign(n, std::vector<Vec>(T + 1));
  traj.xhat_i.assign(n, std::vector<Vec>(T + 1));
  traj.xw.assign(n + 1, std::vector<Vec>(T + 1));
  if (use_bayes) traj.xw_hat_bayes.assign(n, std::vector<Vec>(T + 1));
  if (use_llms) traj.xw_hat_llms.assign(n, std::vector<Vec>(T + 1));
  traj.step_cost.assign(T, 0.0);
  traj.ucom_exact = ctx.strategy.kind != StrategyKind::CustomLinear ||
                    ctx.strategy.expose_ucom;

  // Control- and coupling-driven state components, evolved inline.
  std::vector<Vec> xg(n + 1);
  for (int i = 0; i <= n; ++i) {
    xg[i] = Vec::Zero(topo.dx[i]);
    traj.xw[i][1] = d.x1[i];
  }

  // x0 history for custom-strategy feature windows.
  std::vector<Vec> x0_hist(T + 1);

  std::vector<BayesFilter> bayes;
  std::vector<LlmsFilter> llms;
  for (int i = 1; i <= n; ++i) {
    if (use_bayes) bayes.emplace_back(ctx.plans[i - 1], seed, trial);
    if (use_llms) {
      llms.emplace_back(s.sys.Aii[i - 1], s.sys.Cii[i - 1],
                        &ctx.fsched[i - 1]);
    }
  }

  CommonFilter common(s);
  common.init(d.x1[0]);

  auto compose_state = [&](int t) {
    Vec x(dxt);
    for (int i = 0; i <= n; ++i) {
      x.segment(topo.x_offset(i), topo.dx[i]) = xg[i] + traj.xw[i][t];
    }
    return x;
  };
  auto record_estimates = [&](int t) {
    traj.xhat_c[t] = common.xhat();
    for (int i = 1; i <= n; ++i) {
      if (use_bayes) traj.xw_hat_bayes[i - 1][t] = bayes[i - 1].mean();
      if (use_llms) traj.xw_hat_llms[i - 1][t] = llms[i - 1].mean();
      switch (ctx.strategy.kind) {
        case StrategyKind::Optimal:
          traj.xhat_i[i - 1][t] = xg[i] + bayes[i - 1].mean();
          break;
        case StrategyKind::BestLinear:
        case StrategyKind::CustomLinear:
          traj.xhat_i[i - 1][t] = xg[i] + llms[i - 1].mean();
          break;
        case StrategyKind::StateFeedback:
          // The state is observed through y_i, and the first observation is
          // outside the information set: at t = 1 the estimate is still the
          // (zero-mean) prior.
          if (t == 1) {
            traj.xhat_i[i - 1][t] = xg[i];
          } else {
            traj.xhat_i[i - 1][t] = xg[i] + traj.xw[i][t];
          }
          break;
      }
    }
  };

  traj.x[1] = compose_state(1);
  x0_hist[1] = traj.x[1].head(topo.dx[0]);
  for (int i = 1; i <= n; ++i) {
    traj.y[i - 1][1] =
        s.sys.Cii[i - 1] * traj.x[1].segment(topo.x_offset(i), topo.dx[i]) +
        d.v[i - 1][1];
  }
  record_estimates(1);

  for (int t = 1; t <= T - 1; ++t) {
    // Actions from the permitted information only.
    Vec u(dut), ucom(dut);
    Vec win;
    if (ctx.strategy.kind == StrategyKind::CustomLinear) {
      win = custom_window(s, x0_hist, t, ctx.strategy.custom.window);
    }
    Vec u0;
    switch (ctx.strategy.kind) {
      case StrategyKind::CustomLinear:
        u0 = act_custom_major(ctx.strategy.custom, t, win, traj.xhat_c[t]);
        break;
      default:
        u0 = act_major(s, ctx.sched, t, traj.xhat_c[t]);
    }
    u.head(topo.du[0]) = u0;
    ucom.head(topo.du[0]) = u0;  // the major action is common information

    // Record the common and local parts directly from the gain forms, so the
    // recorded split is the strategy's own (no differencing round-off). The
    // assembled action stays bitwise equal to the act_minor_* outputs.
    std::vector<Vec> ucom_minors(n);
    Vec uloc = Vec::Zero(dut);  // the major agent has no local component
    for (int i = 1; i <= n; ++i) {
      Vec uci, di;
      const Vec common_block =
          traj.xhat_c[t].segment(topo.x_offset(i), topo.dx[i]);
      switch (ctx.strategy.kind) {
        case StrategyKind::Optimal:
        case StrategyKind::BestLinear:
        case StrategyKind::StateFeedback:
          uci = ucom_minor(s, ctx.sched, t, i, traj.xhat_c[t]);
          di = -(ctx.sched.Lloc[i - 1][t] *
                 (traj.xhat_i[i - 1][t] - common_block));
          break;
        case StrategyKind::CustomLinear: {
          const Vec ui = act_custom_minor(ctx.strategy.custom, t, i, win,
                                          traj.xhat_c[t],
                                          traj.xhat_i[i - 1][t]);
          uci = ucom_custom_minor(s, ctx.strategy.custom, t, i, win,
                                  traj.xhat_c[t]);
          di = ui - uci;
          break;
        }
      }
      u.segment(topo.u_offset(i), topo.du[i]) = uci + di;
      ucom.segment(topo.u_offset(i), topo.du[i]) = uci;
      uloc.segment(topo.u_offset(i), topo.du[i]) = di;
      ucom_minors[i - 1] = uci;
    }
    traj.u[t] = u;
    traj.ucom[t] = ucom;
    traj.uloc[t] = uloc;

    traj.step_cost[t] = traj.x[t].dot(s.cost.Q * traj.x[t]) +
                        traj.u[t].dot(s.cost.R * traj.u[t]);

    // Advance the state components.
    const Vec x0_now = x0_hist[t];
    for (int i = n; i >= 0; --i) {
      if (i == 0) {
        traj.xw[0][t + 1] = s.sys.A00 * traj.xw[0][t] + d.w[0][t];
        xg[0] = s.sys.A00 * xg[0] + s.sys.B00 * u0;
      } else {
        traj.xw[i][t + 1] = s.sys.Aii[i - 1] * traj.xw[i][t] + d.w[i][t];
        xg[i] = s.sys.Aii[i - 1] * xg[i] + s.sys.Ai0[i - 1] * x0_now +
                s.sys.Bi0[i - 1] * u0 +
                s.sys.Bii[i - 1] * u.segment(topo.u_offset(i), topo.du[i]);
      }
    }
    traj.x[t + 1] = compose_state(t + 1);
    x0_hist[t + 1] = traj.x[t + 1].head(topo.dx[0]);

    // Observations and filter updates.
    for (int i = 1; i <= n; ++i) {
      const Vec yw =
          s.sys.Cii[i - 1] * traj.xw[i][t + 1] + d.v[i - 1][t + 1];
      traj.y[i - 1][t + 1] = s.sys.Cii[i - 1] * xg[i] + yw;
      try {
        if (use_bayes) bayes[i - 1].step(t + 1, yw);
        if (use_llms) llms[i - 1].step(t + 1, yw);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Numerical) {
          throw numerical_error(std::string(e.what()) + " [trial " +
                                std::to_string(trial) + "]");
        }
        throw;
      }
    }
    common.step(x0_hist[t + 1], x0_now, u0, ucom_minors);
    record_estimates(t + 1);
  }

  traj.terminal_cost = traj.x[T].dot(s.cost.QT * traj.x[T]);
  traj.cost = traj.terminal_cost;
  for (int t = 1; t <= T - 1; ++t) traj.cost += traj.step_cost[t];
  return traj;
}

double replay_residual(const Scenario& s, const Trajectory& traj) {
  const AgentTopology& topo = s.topology;
  auto [A, B] = assemble_global(s);
  double worst = 0;
  for (int t = 1; t <= s.T - 1; ++t) {
    Vec w(topo.dx_total());
    for (int i = 0; i <= topo.n; ++i) {
      w.segment(topo.x_offset(i), topo.dx[i]) = traj.draw.w[i][t];
    }
    const Vec pred = A * traj.x[t] + B * traj.u[t] + w;
    worst = std::max(worst,
                     (traj.x[t + 1] - pred).lpNorm<Eigen::Infinity>());
  }
  for (int i = 1; i <= topo.n; ++i) {
    for (int t = 1; t <= s.T; ++t) {
      const Vec pred =
          s.sys.Cii[i - 1] * traj.x[t].segment(topo.x_offset(i), topo.dx[i]) +
          traj.draw.v[i - 1][t];
      worst = std::max(worst,
                       (traj.y[i - 1][t] - pred).lpNorm<Eigen::Infinity>());
    }
  }
  return worst;
}

json CostReport::to_json() const {
  json j{{"mean", mean}, {"std_error", std_error}, {"trials", trials}};
  if (has_decomposition) {
    j["decomposition"] = {{"Jcom", Jcom},
                          {"Jloc", Jloc},
                          {"Jstoc", Jstoc},
                          {"residual", residual}};
  }
  return j;
}

namespace {

struct Accum {
  double sum = 0, sumsq = 0;
  void add(double c) {
    sum += c;
    sumsq += c * c;
  }
};

}  // namespace

CostReport evaluate(const SimContext& ctx, long N, std::uint64_t seed,
                    bool parallel, const TrajectoryObserver& observer) {
  if (N < 1) throw usage_error("trial count must be at least 1");

  CostReport rep;
  rep.trials = N;

  Accum total;
  if (!parallel) {
    for (long k = 0; k < N; ++k) {
      Trajectory traj = rollout(ctx, seed, static_cast<std::uint64_t>(k));
      total.add(traj.cost);
      if (observer) observer(traj, k);
    }
  } else {
    unsigned nt = std::thread::hardware_concurrency();
    if (nt == 0) nt = 1;
    nt = std::min<unsigned>({nt, 16u, static_cast<unsigned>(N)});
    std::vector<Accum> partial(nt);
    std::vector<std::thread> pool;
    std::mutex observer_mu;
    std::exception_ptr first_error;
    std::mutex error_mu;
    const long chunk = (N + nt - 1) / nt;
    for (unsigned worker = 0; worker < nt; ++worker) {
      pool.emplace_back([&, worker] {
        const long lo = worker * chunk;
        const long hi = std::min<long>(N, lo + chunk);
        try {
          for (long k = lo; k < hi; ++k) {
            Trajectory traj = rollout(ctx, seed, static_cast<std::uint64_t>(k));
            partial[worker].add(traj.cost);
            if (observer) {
              std::lock_guard<std::mutex> lock(observer_mu);
              observer(traj, k);
            }
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    for (const Accum& a : partial) {
      total.sum += a.sum;
      total.sumsq += a.sumsq;
    }
  }

  rep.mean = total.sum / N;
  if (N >= 2) {
    const double var =
        std::max(0.0, (total.sumsq - N * rep.mean * rep.mean) / (N - 1));
    rep.std_error = std::sqrt(var / N);
  }
  return rep;
}

}  // namespace mmlq
