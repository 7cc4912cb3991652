#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "mmlq/splitting.hpp"
#include "mmlq/tolerances.hpp"
#include "mmlq/verification.hpp"

using namespace mmlq;

namespace {

std::vector<Trajectory> collect_batch(const SimContext& ctx, long N,
                                      std::uint64_t seed) {
  std::vector<Trajectory> batch(static_cast<std::size_t>(N));
  evaluate(ctx, N, seed, false, [&](const Trajectory& traj, long k) {
    batch[static_cast<std::size_t>(k)] = traj;
  });
  return batch;
}

}  // namespace

TEST_SUITE("splitting") {

TEST_CASE("state splits reconstruct the trajectory and combine as documented") {
  for (const char* name : {"scalar_gaussian.json", "two_minor_discrete.json"}) {
    CAPTURE(name);
    const Scenario s = testutil::load_bundled(name);
    const SimContext ctx = make_context(s, testutil::strategy(StrategyKind::Optimal));
    const Trajectory traj = rollout(ctx, 17, 4);
    const SplitTrajectory sp =
        propagate_splits(s, traj, traj.ucom, traj.uloc);

    for (int t = 1; t <= s.T; ++t) {
      const std::size_t ts = static_cast<std::size_t>(t);
      const Vec recon = sp.xcom[ts] + sp.xloc[ts] + sp.xstoc[ts];
      CHECK((recon - traj.x[ts]).norm() <=
            1e-12 * (1.0 + traj.x[ts].norm()));
      const Vec zc = sp.xcom[ts] + sp.xstoc[ts];
      CHECK(testutil::bits_equal(sp.zcom[ts], zc));
      for (int i = 1; i <= s.topology.n; ++i) {
        const int off = s.topology.x_offset(i), d = s.topology.dx[i];
        const std::size_t is = static_cast<std::size_t>(i - 1);
        const Vec zl = sp.xloc[ts].segment(off, d) + sp.xstoc[ts].segment(off, d);
        CHECK(testutil::bits_equal(sp.zloc[is][ts], zl));
        // Observation split: y = ycom + yloc + ystoc.
        const Vec ysum = sp.ycom[is][ts] + sp.yloc[is][ts] + sp.ystoc[is][ts];
        CHECK((ysum - traj.y[is][ts]).norm() <= 1e-12 * (1.0 + ysum.norm()));
      }
    }

    // The split controls drive xcom/xloc; they must add back to u.
    for (int t = 1; t <= s.T - 1; ++t) {
      const std::size_t ts = static_cast<std::size_t>(t);
      CHECK((sp.ucom[ts] + sp.uloc[ts] - traj.u[ts]).norm() <= 1e-14);
    }
  }
}

TEST_CASE("a corrupted trajectory fails the reconstruction assertion") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  const SimContext ctx = make_context(s, testutil::strategy(StrategyKind::Optimal));
  Trajectory traj = rollout(ctx, 17, 0);
  traj.x[2](0) += 1.0;
  auto err = testutil::catch_error(
      [&] { propagate_splits(s, traj, traj.ucom, traj.uloc); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Numerical);
  CHECK(testutil::message_mentions(err, "does not reconstruct"));
}

TEST_CASE("split_controls passes stored closed-form splits through") {
  const Scenario s = testutil::load_bundled("micro_discrete.json");
  const SimContext ctx = make_context(s, testutil::strategy(StrategyKind::Optimal));
  const std::vector<Trajectory> batch = collect_batch(ctx, 8, 3);
  const std::vector<ControlSplit> splits = split_controls(s, batch);
  REQUIRE(splits.size() == batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    for (int t = 1; t <= s.T - 1; ++t) {
      const std::size_t ts = static_cast<std::size_t>(t);
      CHECK(testutil::bits_equal(splits[k].first[ts], batch[k].ucom[ts]));
      CHECK(testutil::bits_equal(splits[k].second[ts], batch[k].uloc[ts]));
    }
  }
}

TEST_CASE("the regression split reproduces the closed form in mean") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");

  // A custom strategy with the split hidden forces the regression path; the
  // gains clone the best-linear strategy, so the closed form is available for
  // comparison from a separate run.
  Strategy hidden = testutil::strategy(StrategyKind::CustomLinear);
  hidden.custom = testutil::optimal_gain_clone(s, solve_schedules(s));
  hidden.expose_ucom = false;
  const SimContext ctx = make_context(s, hidden);
  const long N = 400;
  const std::vector<Trajectory> batch = collect_batch(ctx, N, 101);
  REQUIRE(!batch[0].ucom_exact);

  const std::vector<ControlSplit> fit = split_controls(s, batch);

  // fit + residual reassembles u exactly by construction.
  for (std::size_t k = 0; k < batch.size(); k += 37) {
    for (int t = 1; t <= s.T - 1; ++t) {
      const std::size_t ts = static_cast<std::size_t>(t);
      CHECK((fit[k].first[ts] + fit[k].second[ts] - batch[k].u[ts]).norm() <=
            1e-12);
    }
  }

  // The regressor includes a constant column, so the fitted residuals have
  // (near-)zero batch mean: mean(fit) = mean(u) up to the tiny ridge. The
  // closed form splits the same u into ucom + uloc, so per step and entry
  // mean(fit) - mean(ucom_exact) - mean(uloc_exact) vanishes.
  const SimContext exact_ctx =
      make_context(s, testutil::strategy(StrategyKind::BestLinear));
  const std::vector<Trajectory> exact = collect_batch(exact_ctx, N, 101);
  const int dut = s.topology.du_total();
  for (int t = 1; t <= s.T - 1; ++t) {
    const std::size_t ts = static_cast<std::size_t>(t);
    Vec mean_fit = Vec::Zero(dut), mean_exact = Vec::Zero(dut),
        mean_uloc = Vec::Zero(dut);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      mean_fit += fit[k].first[ts];
      mean_exact += exact[k].ucom[ts];
      mean_uloc += exact[k].uloc[ts];
    }
    CHECK((mean_fit - mean_exact - mean_uloc).norm() /
              static_cast<double>(N) <=
          1e-8);
  }
}

TEST_CASE("the regression split needs a minimum batch") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  Strategy hidden = testutil::strategy(StrategyKind::CustomLinear);
  hidden.custom = testutil::optimal_gain_clone(s, solve_schedules(s));
  hidden.expose_ucom = false;
  const SimContext ctx = make_context(s, hidden);
  const std::vector<Trajectory> batch = collect_batch(ctx, 99, 5);
  auto err = testutil::catch_error([&] { split_controls(s, batch); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Validation);
  CHECK(testutil::message_mentions(err, "at least 100"));
}

TEST_CASE("information sets rebuild from the stochastic components alone") {
  const struct {
    const char* scenario;
    StrategyKind kind;
  } cases[] = {
      {"scalar_gaussian.json", StrategyKind::Optimal},
      {"scalar_gaussian.json", StrategyKind::BestLinear},
      {"micro_discrete.json", StrategyKind::Optimal},
      {"micro_discrete.json", StrategyKind::BestLinear},
      {"state_feedback.json", StrategyKind::StateFeedback},
  };
  for (const auto& c : cases) {
    CAPTURE(c.scenario);
    const Scenario s = testutil::load_bundled(c.scenario);
    const SimContext ctx = make_context(s, testutil::strategy(c.kind));
    for (std::uint64_t trial = 0; trial < 4; ++trial) {
      const Trajectory traj = rollout(ctx, 29, trial);
      const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
      CHECK(reconstruction_residual(ctx, traj, sp, 29, trial) <=
            tol::kReconstruct);
    }
  }

  // Same property for a custom strategy (its split uses the closed form of
  // the affine structure).
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  Strategy st = testutil::strategy(StrategyKind::CustomLinear);
  st.custom = testutil::optimal_gain_clone(s, solve_schedules(s));
  const SimContext ctx = make_context(s, st);
  const Trajectory traj = rollout(ctx, 29, 1);
  const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
  CHECK(reconstruction_residual(ctx, traj, sp, 29, 1) <= tol::kReconstruct);
}

TEST_CASE("the split csv has the documented grammar") {
  const Scenario s = testutil::load_bundled("two_minor_discrete.json");
  const SimContext ctx = make_context(s, testutil::strategy(StrategyKind::Optimal));
  const Trajectory traj = rollout(ctx, 41, 0);
  const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);

  std::ostringstream out;
  write_split_csv(out, s, sp);
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,component,agent,entry,value");

  std::set<std::string> components;
  long rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1), c4 = line.find(',', c3 + 1);
    REQUIRE(c4 != std::string::npos);
    const int t = std::stoi(line.substr(0, c1));
    CHECK(t >= 1);
    CHECK(t <= s.T);
    components.insert(line.substr(c1 + 1, c2 - c1 - 1));
    const int agent = std::stoi(line.substr(c2 + 1, c3 - c2 - 1));
    CHECK(agent >= 0);
    CHECK(agent <= s.topology.n);
    (void)std::stod(line.substr(c4 + 1));  // value parses as a double
  }
  const std::set<std::string> want = {"ucom", "uloc", "xcom",  "xloc",
                                      "xstoc", "zcom", "ycom", "yloc",
                                      "ystoc", "zloc"};
  CHECK(components == want);

  // Row count: controls cover t <= T-1, states t <= T, observations per minor.
  const long du = s.topology.du_total(), dx = s.topology.dx_total();
  long dy = 0, dxm = 0;
  for (int i = 1; i <= s.topology.n; ++i) {
    dy += s.topology.dy[static_cast<std::size_t>(i - 1)];
    dxm += s.topology.dx[static_cast<std::size_t>(i)];
  }
  const long want_rows = 2 * (s.T - 1) * du + 4 * s.T * dx +
                         3 * s.T * dy + s.T * dxm;
  CHECK(rows == want_rows);
}

}  // TEST_SUITE("splitting")
