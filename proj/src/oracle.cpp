#include "mmlq/oracle.hpp"

#include <cstring>
#include <string>
#include <unordered_map>

#include "mmlq/controllers.hpp"
#include "mmlq/errors.hpp"
#include "mmlq/tolerances.hpp"

namespace mmlq {

namespace {

// One enumerated primitive variable: where its realization lands in the draw.
struct VarSlot {
  const NoiseDist* dist = nullptr;
  int kind = 0;  // 0 = initial state, 1 = process noise, 2 = observation
  int agent = 0;
  int t = 0;
};

void append_bits(std::string& key, const Vec& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    double x = v(k);
    if (x == 0.0) x = 0.0;  // normalize -0.0
    char buf[sizeof(double)];
    std::memcpy(buf, &x, sizeof(double));
    key.append(buf, sizeof(double));
  }
}

int intern(std::unordered_map<std::string, int>& pool, const std::string& key) {
  auto [it, fresh] = pool.emplace(key, static_cast<int>(pool.size()));
  (void)fresh;
  return it->second;
}

}  // namespace

ExactLaw oracle_enumerate(const Scenario& s) {
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;

  std::vector<VarSlot> vars;
  for (int i = 0; i <= n; ++i) {
    vars.push_back({&s.noise.x1[i], 0, i, 0});
  }
  for (int i = 0; i <= n; ++i) {
    for (int t = 1; t <= T - 1; ++t) {
      vars.push_back({&s.noise.w[i], 1, i, t});
    }
  }
  for (int i = 1; i <= n; ++i) {
    for (int t = 1; t <= T; ++t) {
      vars.push_back({&s.noise.v[i - 1], 2, i, t});
    }
  }

  double log_count = 0;
  for (const VarSlot& var : vars) {
    if (!var.dist->is_point_mass()) {
      throw validation_error(
          "exact enumeration requires finite-support noise everywhere");
    }
    log_count += std::log2(static_cast<double>(var.dist->atoms.size()));
  }
  if (log_count > std::log2(static_cast<double>(tol::kOutcomeGuard))) {
    throw validation_error(
        "exact enumeration outcome count exceeds the guard of " +
        std::to_string(static_cast<long>(tol::kOutcomeGuard)));
  }
  long total = 1;
  for (const VarSlot& var : vars) {
    total *= static_cast<long>(var.dist->atoms.size());
  }

  ExactLaw law;
  law.s = &s;
  law.n_outcomes = total;
  law.prob.resize(total);
  law.draws.resize(total);
  law.xw.resize(total);
  law.yw.resize(total);

  std::vector<std::size_t> idx(vars.size(), 0);
  for (long o = 0; o < total; ++o) {
    PrimitiveDraw d;
    d.x1.resize(n + 1);
    d.w.assign(n + 1, std::vector<Vec>(T));
    d.v.assign(n, std::vector<Vec>(T + 1));
    double p = 1;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      const VarSlot& var = vars[k];
      const Vec& atom = var.dist->atoms[idx[k]];
      p *= var.dist->probs[idx[k]];
      switch (var.kind) {
        case 0: d.x1[var.agent] = atom; break;
        case 1: d.w[var.agent][var.t] = atom; break;
        case 2: d.v[var.agent - 1][var.t] = atom; break;
      }
    }
    law.prob[o] = p;
    law.draws[o] = std::move(d);

    // Mixed-radix increment.
    for (std::size_t k = 0; k < vars.size(); ++k) {
      if (++idx[k] < vars[k].dist->atoms.size()) break;
      idx[k] = 0;
    }
  }

  // Control-free paths.
  for (long o = 0; o < total; ++o) {
    const PrimitiveDraw& d = law.draws[o];
    auto& xw = law.xw[o];
    auto& yw = law.yw[o];
    xw.assign(n + 1, std::vector<Vec>(T + 1));
    yw.assign(n, std::vector<Vec>(T + 1));
    for (int i = 0; i <= n; ++i) {
      xw[i][1] = d.x1[i];
      const Mat& A = i == 0 ? s.sys.A00 : s.sys.Aii[i - 1];
      for (int t = 1; t <= T - 1; ++t) {
        xw[i][t + 1] = A * xw[i][t] + d.w[i][t];
      }
    }
    for (int i = 1; i <= n; ++i) {
      for (int t = 1; t <= T; ++t) {
        yw[i - 1][t] = s.sys.Cii[i - 1] * xw[i][t] + d.v[i - 1][t];
      }
    }
  }

  // Information groupings, built on progressively extended path keys.
  law.common_group.assign(T + 1, std::vector<int>(total));
  law.agent_group.assign(n, std::vector<std::vector<int>>(
                                T + 1, std::vector<int>(total)));
  std::vector<std::string> ckey(total);
  std::vector<std::vector<std::string>> akey(n,
                                             std::vector<std::string>(total));
  for (int t = 1; t <= T; ++t) {
    std::unordered_map<std::string, int> cpool;
    for (long o = 0; o < total; ++o) {
      append_bits(ckey[o], law.xw[o][0][t]);
      law.common_group[t][o] = intern(cpool, ckey[o]);
    }
    for (int i = 1; i <= n; ++i) {
      std::unordered_map<std::string, int> apool;
      for (long o = 0; o < total; ++o) {
        akey[i - 1][o].append(ckey[o]);  // major path dominates the class
        if (t >= 2) append_bits(akey[i - 1][o], law.yw[o][i - 1][t]);
        law.agent_group[i - 1][t][o] = intern(apool, akey[i - 1][o]);
      }
    }
  }
  return law;
}

std::vector<Vec> cluster_means(const ExactLaw& law,
                               const std::vector<int>& cluster,
                               const std::vector<Vec>& value) {
  int n_clusters = 0;
  for (int c : cluster) n_clusters = std::max(n_clusters, c + 1);
  std::vector<Vec> acc(n_clusters);
  std::vector<double> mass(n_clusters, 0);
  for (long o = 0; o < law.n_outcomes; ++o) {
    const int c = cluster[o];
    if (acc[c].size() == 0) acc[c] = Vec::Zero(value[o].size());
    acc[c] += law.prob[o] * value[o];
    mass[c] += law.prob[o];
  }
  std::vector<Vec> out(law.n_outcomes);
  for (long o = 0; o < law.n_outcomes; ++o) {
    const int c = cluster[o];
    out[o] = mass[c] > 0 ? Vec((acc[c] / mass[c]).eval()) : value[o];
  }
  return out;
}

std::vector<std::vector<Vec>> oracle_llms_xw(const ExactLaw& law, int i) {
  const Scenario& s = *law.s;
  const int T = s.T;
  const Mat& A = s.sys.Aii[i - 1];
  const Mat& C = s.sys.Cii[i - 1];
  const Mat Sv = s.noise.v[i - 1].variance();
  const Mat Sw = s.noise.w[i].variance();
  const int dx = s.topology.dx[i];
  const int dy = static_cast<int>(C.rows());

  // Second moments of the control-free component.
  std::vector<Mat> var(T + 1);
  var[1] = s.noise.x1[i].variance();
  for (int t = 1; t <= T - 1; ++t) var[t + 1] = A * var[t] * A.transpose() + Sw;
  std::vector<Mat> apow(T + 1);  // apow[k] = A^k
  apow[0] = Mat::Identity(dx, dx);
  for (int k = 1; k <= T; ++k) apow[k] = A * apow[k - 1];
  auto cov_xw = [&](int a, int b) -> Mat {  // Cov(xw(a), xw(b))
    if (a >= b) return apow[a - b] * var[b];
    return var[a] * apow[b - a].transpose();
  };

  std::vector<std::vector<Vec>> est(T + 1,
                                    std::vector<Vec>(law.n_outcomes));
  for (long o = 0; o < law.n_outcomes; ++o) est[1][o] = Vec::Zero(dx);

  for (int t = 2; t <= T; ++t) {
    const int m = (t - 1) * dy;
    Mat gram(m, m);
    Mat cross(dx, m);
    for (int a = 2; a <= t; ++a) {
      for (int b = 2; b <= t; ++b) {
        Mat blk = C * cov_xw(a, b) * C.transpose();
        if (a == b) blk += Sv;
        gram.block((a - 2) * dy, (b - 2) * dy, dy, dy) = blk;
      }
      cross.middleCols((a - 2) * dy, dy) = cov_xw(t, a) * C.transpose();
    }
    const Mat coef =
        solve_spd(sym(gram), cross.transpose(), "exact projection gram")
            .transpose();
    for (long o = 0; o < law.n_outcomes; ++o) {
      Vec y(m);
      for (int a = 2; a <= t; ++a) {
        y.segment((a - 2) * dy, dy) = law.yw[o][i - 1][a];
      }
      est[t][o] = coef * y;
    }
  }
  return est;
}

OracleStrategy oracle_canonical_strategy(const Scenario& s,
                                         const GainSchedule& g) {
  return [&s, &g](int t, long, const Vec& xhat_c,
                  const std::vector<Vec>& xhat_minors, const Vec&) {
    const AgentTopology& topo = s.topology;
    Vec u(topo.du_total());
    u.head(topo.du[0]) = act_major(s, g, t, xhat_c);
    for (int i = 1; i <= topo.n; ++i) {
      u.segment(topo.u_offset(i), topo.du[i]) =
          act_minor_optimal(s, g, t, i, xhat_c, xhat_minors[i - 1]);
    }
    return u;
  };
}

OracleEval oracle_evaluate(const ExactLaw& law, const OracleStrategy& strat,
                           OracleEstimates mode) {
  const Scenario& s = *law.s;
  const AgentTopology& topo = s.topology;
  const int n = topo.n;
  const int T = s.T;
  const long no = law.n_outcomes;
  auto [A, B] = assemble_global(s);

  OracleEval ev;
  ev.trajs.assign(no, Trajectory{});
  for (long o = 0; o < no; ++o) {
    Trajectory& traj = ev.trajs[o];
    traj.draw = law.draws[o];
    traj.x.assign(T + 1, Vec());
    traj.u.assign(T, Vec());
    traj.ucom.assign(T, Vec());
    traj.uloc.assign(T, Vec());
    traj.xhat_c.assign(T + 1, Vec());
    traj.y.assign(n, std::vector<Vec>(T + 1));
    traj.xhat_i.assign(n, std::vector<Vec>(T + 1));
    traj.xw.assign(n + 1, std::vector<Vec>(T + 1));
    traj.xw_hat_bayes.assign(n, std::vector<Vec>(T + 1));
    traj.xw_hat_llms.assign(n, std::vector<Vec>(T + 1));
    traj.step_cost.assign(T, 0.0);
    for (int i = 0; i <= n; ++i) {
      for (int t = 1; t <= T; ++t) traj.xw[i][t] = law.xw[o][i][t];
    }
    Vec x1(topo.dx_total());
    for (int i = 0; i <= n; ++i) {
      x1.segment(topo.x_offset(i), topo.dx[i]) = law.draws[o].x1[i];
    }
    traj.x[1] = x1;
  }

  // Exact estimates of the control-free components.
  std::vector<std::vector<std::vector<Vec>>> xw_cm(n);   // [i-1][t][o]
  std::vector<std::vector<std::vector<Vec>>> xw_lin(n);  // [i-1][t][o]
  for (int i = 1; i <= n; ++i) {
    xw_cm[i - 1].assign(T + 1, {});
    for (int t = 1; t <= T; ++t) {
      std::vector<Vec> vals(no);
      for (long o = 0; o < no; ++o) vals[o] = law.xw[o][i][t];
      xw_cm[i - 1][t] = cluster_means(law, law.agent_group[i - 1][t], vals);
    }
    xw_lin[i - 1] = oracle_llms_xw(law, i);
    for (long o = 0; o < no; ++o) {
      for (int t = 1; t <= T; ++t) {
        ev.trajs[o].xw_hat_bayes[i - 1][t] = xw_cm[i - 1][t][o];
        ev.trajs[o].xw_hat_llms[i - 1][t] = xw_lin[i - 1][t][o];
      }
    }
  }

  for (int t = 1; t <= T; ++t) {
    // Common estimate: exact conditional mean of the current state.
    std::vector<Vec> xvals(no);
    for (long o = 0; o < no; ++o) xvals[o] = ev.trajs[o].x[t];
    std::vector<Vec> xc = cluster_means(law, law.common_group[t], xvals);

    for (long o = 0; o < no; ++o) {
      Trajectory& traj = ev.trajs[o];
      traj.xhat_c[t] = xc[o];
      for (int i = 1; i <= n; ++i) {
        const Vec xg =
            traj.x[t].segment(topo.x_offset(i), topo.dx[i]) - law.xw[o][i][t];
        const auto& xw_hat = mode == OracleEstimates::ConditionalMean
                                 ? xw_cm[i - 1][t][o]
                                 : xw_lin[i - 1][t][o];
        traj.xhat_i[i - 1][t] = xg + xw_hat;
        traj.y[i - 1][t] =
            s.sys.Cii[i - 1] * traj.x[t].segment(topo.x_offset(i), topo.dx[i]) +
            law.draws[o].v[i - 1][t];
      }
    }
    if (t == T) break;

    std::vector<Vec> uvals(no);
    for (long o = 0; o < no; ++o) {
      Trajectory& traj = ev.trajs[o];
      std::vector<Vec> xhat_minors(n);
      for (int i = 1; i <= n; ++i) xhat_minors[i - 1] = traj.xhat_i[i - 1][t];
      traj.u[t] = strat(t, o, traj.xhat_c[t], xhat_minors, traj.x[t]);
      uvals[o] = traj.u[t];
    }
    // Exact conditional split of the control.
    std::vector<Vec> ucom = cluster_means(law, law.common_group[t], uvals);
    for (long o = 0; o < no; ++o) {
      Trajectory& traj = ev.trajs[o];
      traj.ucom[t] = ucom[o];
      traj.uloc[t] = traj.u[t] - ucom[o];
      traj.step_cost[t] = traj.x[t].dot(s.cost.Q * traj.x[t]) +
                          traj.u[t].dot(s.cost.R * traj.u[t]);
      Vec w(topo.dx_total());
      for (int i = 0; i <= n; ++i) {
        w.segment(topo.x_offset(i), topo.dx[i]) = law.draws[o].w[i][t];
      }
      traj.x[t + 1] = A * traj.x[t] + B * traj.u[t] + w;
    }
  }

  ev.cost = 0;
  for (long o = 0; o < no; ++o) {
    Trajectory& traj = ev.trajs[o];
    traj.terminal_cost = traj.x[T].dot(s.cost.QT * traj.x[T]);
    traj.cost = traj.terminal_cost;
    for (int t = 1; t <= T - 1; ++t) traj.cost += traj.step_cost[t];
    ev.cost += law.prob[o] * traj.cost;
  }
  return ev;
}

}  // namespace mmlq
