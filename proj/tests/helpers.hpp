#pragma once

// Shared fixtures for the unit tests: bundled-scenario loading, a hand-built
// scalar scenario matching the frozen Python oracles under tests/oracles/,
// structured-error capture, paired Monte Carlo cost differences, and a
// CustomLinear clone of the canonical gain strategy.

#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmlq/controllers.hpp"
#include "mmlq/errors.hpp"
#include "mmlq/riccati.hpp"
#include "mmlq/scenario.hpp"
#include "mmlq/simulation.hpp"
#include "mmlq/verification.hpp"

namespace testutil {

inline std::string scenario_path(const std::string& name) {
  return std::string(MMLQ_SCENARIO_DIR) + "/" + name;
}

inline mmlq::Scenario load_bundled(const std::string& name) {
  return mmlq::load_scenario(scenario_path(name));
}

inline mmlq::Strategy strategy(mmlq::StrategyKind kind) {
  mmlq::Strategy st;
  st.kind = kind;
  return st;
}

// Scalar one-minor scenario whose minor-agent filter parameters
// (a = 0.95, c = 1.3, var w = 0.25, var v = 0.49, var x1 = 1.1) match
// tests/oracles/scalar_recursions.py and scalar_kalman.py.
inline mmlq::Scenario scalar_filter_scenario() {
  using mmlq::Mat;
  mmlq::Scenario s;
  s.topology.n = 1;
  s.topology.dx = {1, 1};
  s.topology.du = {1, 1};
  s.topology.dy = {1};
  auto m1 = [](double v) { return Mat::Constant(1, 1, v); };
  s.sys.A00 = m1(0.5);
  s.sys.B00 = m1(1.0);
  s.sys.Ai0 = {m1(0.2)};
  s.sys.Aii = {m1(0.95)};
  s.sys.Bi0 = {m1(0.0)};
  s.sys.Bii = {m1(1.0)};
  s.sys.Cii = {m1(1.3)};
  s.cost.Q = Mat::Identity(2, 2);
  s.cost.R = Mat::Identity(2, 2);
  s.cost.QT = Mat::Identity(2, 2);
  s.noise.x1 = {mmlq::NoiseDist::gaussian(m1(1.0)),
                mmlq::NoiseDist::gaussian(m1(1.1))};
  s.noise.w = {mmlq::NoiseDist::gaussian(m1(0.1)),
               mmlq::NoiseDist::gaussian(m1(0.25))};
  s.noise.v = {mmlq::NoiseDist::gaussian(m1(0.49))};
  s.T = 5;
  s.seed = 99;
  return s;
}

// Runs `fn`, capturing a structured error if one is thrown.
template <class Fn>
std::optional<std::pair<mmlq::ErrorKind, std::string>> catch_error(Fn&& fn) {
  try {
    fn();
  } catch (const mmlq::Error& e) {
    return std::make_pair(e.kind(), std::string(e.what()));
  }
  return std::nullopt;
}

inline bool message_mentions(
    const std::optional<std::pair<mmlq::ErrorKind, std::string>>& err,
    const std::string& needle) {
  return err && err->second.find(needle) != std::string::npos;
}

inline bool bits_equal(const mmlq::Vec& a, const mmlq::Vec& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// CustomLinear gain tables that reproduce the canonical gain strategy:
// u0 = -Lcom_0 xhat_c and u_i = -Lcom_i xhat_c - Lloc_i (xhat_i - block_i),
// written in the Gc/Gl affine form (the custom rollout estimates with the
// best-linear filter, so the clone plays the BestLinear strategy).
inline mmlq::CustomGains optimal_gain_clone(const mmlq::Scenario& s,
                                            const mmlq::GainSchedule& g) {
  using mmlq::Mat;
  const auto& topo = s.topology;
  mmlq::CustomGains cg;
  cg.window = 1;
  for (int t = 1; t <= s.T - 1; ++t) {
    cg.Gw0.M.push_back(Mat::Zero(topo.du[0], topo.dx[0]));
    cg.Gc0.M.push_back(-g.Lcom_row(s, t, 0));
  }
  for (int i = 1; i <= topo.n; ++i) {
    mmlq::CustomMinorGains mg;
    Mat pick = Mat::Zero(topo.dx[i], topo.dx_total());
    pick.block(0, topo.x_offset(i), topo.dx[i], topo.dx[i]).setIdentity();
    for (int t = 1; t <= s.T - 1; ++t) {
      mg.Gw.M.push_back(Mat::Zero(topo.du[i], topo.dx[0]));
      mg.Gc.M.push_back(-g.Lcom_row(s, t, i) + g.Lloc[i - 1][t] * pick);
      mg.Gl.M.push_back(-g.Lloc[i - 1][t]);
    }
    cg.minors.push_back(std::move(mg));
  }
  return cg;
}

struct PairedDiff {
  double mean = 0;
  double std_error = 0;
  long n = 0;
};

// Per-trial cost difference J_b - J_a under common random numbers.
inline PairedDiff paired_cost_diff(const mmlq::SimContext& a,
                                   const mmlq::SimContext& b, long N,
                                   std::uint64_t seed) {
  std::vector<double> ca(static_cast<std::size_t>(N)),
      cb(static_cast<std::size_t>(N));
  auto collect = [](std::vector<double>& dst) {
    return [&dst](const mmlq::Trajectory& traj, long k) {
      dst[static_cast<std::size_t>(k)] = traj.cost;
    };
  };
  mmlq::evaluate(a, N, seed, false, collect(ca));
  mmlq::evaluate(b, N, seed, false, collect(cb));
  mmlq::MomentAcc acc;
  for (long k = 0; k < N; ++k) {
    acc.add(cb[static_cast<std::size_t>(k)] - ca[static_cast<std::size_t>(k)]);
  }
  return {acc.mean(), acc.std_error(), N};
}

}  // namespace testutil
