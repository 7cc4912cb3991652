#include <doctest.h>

#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "mmlq/controllers.hpp"
#include "mmlq/riccati.hpp"

using namespace mmlq;

namespace {

// Deterministic probe vector with entries in [-1, 1).
Vec probe(int dim, std::uint64_t salt) {
  rng::Stream st(7, salt, 6, 0, 0);
  Vec v(dim);
  for (int k = 0; k < dim; ++k) v(k) = 2.0 * st.u01(static_cast<std::uint64_t>(k)) - 1.0;
  return v;
}

json clone_gains_json(const Scenario& s, const CustomGains& cg) {
  json j;
  j["window"] = cg.window;
  auto seq = [](const GainSeq& g) {
    json out = json::array();
    for (const Mat& m : g.M) out.push_back(mat_to_json(m));
    return out;
  };
  j["major"] = {{"Gw", seq(cg.Gw0)}, {"Gc", seq(cg.Gc0)}};
  j["minors"] = json::array();
  for (int i = 1; i <= s.topology.n; ++i) {
    const CustomMinorGains& mg = cg.minors[static_cast<std::size_t>(i - 1)];
    j["minors"].push_back(
        {{"Gw", seq(mg.Gw)}, {"Gc", seq(mg.Gc)}, {"Gl", seq(mg.Gl)}});
  }
  return j;
}

}  // namespace

TEST_SUITE("controllers") {

TEST_CASE("strategy specs parse to the right kinds") {
  CHECK(strategy_from_spec("optimal").kind == StrategyKind::Optimal);
  CHECK(strategy_from_spec("best-linear").kind == StrategyKind::BestLinear);
  CHECK(strategy_from_spec("state-feedback").kind == StrategyKind::StateFeedback);

  auto err = testutil::catch_error([] { strategy_from_spec("lqg"); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Usage);
  CHECK(testutil::message_mentions(err, "unknown strategy"));

  err = testutil::catch_error(
      [] { strategy_from_spec("custom:/nonexistent/gains.json"); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Usage);
  CHECK(testutil::message_mentions(err, "cannot open gain file"));
}

TEST_CASE("canonical actions implement the gain-schedule feedback") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  const GainSchedule g = solve_schedules(s);
  const int dxt = s.topology.dx_total();

  for (int t = 1; t <= s.T - 1; ++t) {
    const Vec xc = probe(dxt, 10 * static_cast<std::uint64_t>(t));
    const Vec xi = probe(s.topology.dx[1], 10 * static_cast<std::uint64_t>(t) + 1);

    const Vec u0 = act_major(s, g, t, xc);
    CHECK((u0 + g.Lcom_row(s, t, 0) * xc).norm() == 0.0);

    const Vec uc = ucom_minor(s, g, t, 1, xc);
    CHECK((uc + g.Lcom_row(s, t, 1) * xc).norm() == 0.0);

    const Vec block = xc.segment(s.topology.x_offset(1), s.topology.dx[1]);
    const Vec want = uc - g.Lloc[0][static_cast<std::size_t>(t)] * (xi - block);
    const Vec u1 = act_minor_optimal(s, g, t, 1, xc, xi);
    CHECK((u1 - want).norm() <= 1e-15);

    // The linear and state-feedback variants are the same feedback law
    // applied to a different estimate argument.
    CHECK(testutil::bits_equal(act_minor_linear(s, g, t, 1, xc, xi), u1));
    CHECK(testutil::bits_equal(act_minor_state_feedback(s, g, t, 1, xc, xi), u1));
  }
}

TEST_CASE("state feedback is gated on perfect observations") {
  const Scenario ok = testutil::load_bundled("state_feedback.json");
  CHECK(!testutil::catch_error([&] { require_state_feedback(ok); }).has_value());

  const Scenario bad = testutil::load_bundled("scalar_gaussian.json");
  auto err = testutil::catch_error([&] { require_state_feedback(bad); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Validation);
  CHECK(testutil::message_mentions(err, "perfect observations"));
}

TEST_CASE("custom gain json accepts fixed and per-step tables") {
  // n = 1, du = {1, 1}, dx = {1, 1}: window 2 makes the feature 2-long.
  const json j = {
      {"window", 2},
      {"major",
       {{"Gw", {{0.1, 0.2}}},  // one 1x2 matrix, applied at every step
        {"Gc", {{{0.3, 0.4}}, {{0.5, 0.6}}, {{0.7, 0.8}}}},  // per step
        {"g", {0.25}}}},
      {"minors",
       json::array({{{"Gw", {{0.0, 0.0}}},
                     {"Gc", {{-1.0, 2.0}}},
                     {"Gl", {{0.5}}},
                     {"g", {{-0.125}, {0.125}}}}})},
  };
  const CustomGains cg = custom_gains_from_json(j);
  CHECK(cg.window == 2);
  REQUIRE(cg.Gw0.M.size() == 1);
  REQUIRE(cg.Gc0.M.size() == 3);
  CHECK(cg.Gw0.at(1)(0, 1) == 0.2);
  CHECK(cg.Gw0.at(3)(0, 0) == 0.1);  // time-invariant: same matrix at t = 3
  CHECK(cg.Gc0.at(2)(0, 0) == 0.5);
  CHECK(cg.Gc0.at(9)(0, 1) == 0.8);  // clamped to the last entry
  CHECK(cg.g0.at(1)(0) == 0.25);
  REQUIRE(cg.minors.size() == 1);
  CHECK(cg.minors[0].Gl.at(4)(0, 0) == 0.5);
  CHECK(cg.minors[0].g.at(1)(0) == -0.125);
  CHECK(cg.minors[0].g.at(2)(0) == 0.125);

  json bad = j;
  bad["minors"][0]["extra"] = 1;
  auto err = testutil::catch_error([&] { custom_gains_from_json(bad); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Validation);
  CHECK(testutil::message_mentions(err, "unknown key"));

  bad = j;
  bad.erase("major");
  err = testutil::catch_error([&] { custom_gains_from_json(bad); });
  REQUIRE(err.has_value());
  CHECK(testutil::message_mentions(err, "major and minors are required"));

  bad = j;
  bad["window"] = 0;
  err = testutil::catch_error([&] { custom_gains_from_json(bad); });
  REQUIRE(err.has_value());
  CHECK(testutil::message_mentions(err, "positive integer"));
}

TEST_CASE("custom gain dimensions are validated against the scenario") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  const GainSchedule g = solve_schedules(s);
  CustomGains cg = testutil::optimal_gain_clone(s, g);
  CHECK(!testutil::catch_error([&] { validate_custom_gains(s, cg); }).has_value());

  CustomGains wrong = cg;
  wrong.Gc0.M[0] = Mat::Zero(1, 3);  // dx_total is 2
  auto err = testutil::catch_error([&] { validate_custom_gains(s, wrong); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Validation);
  CHECK(testutil::message_mentions(err, "major.Gc"));

  wrong = cg;
  wrong.minors.clear();
  err = testutil::catch_error([&] { validate_custom_gains(s, wrong); });
  REQUIRE(err.has_value());
  CHECK(testutil::message_mentions(err, "minor gain sets"));

  wrong = cg;
  wrong.minors[0].Gl.M[2] = Mat::Zero(1, 2);  // dx_1 is 1
  err = testutil::catch_error([&] { validate_custom_gains(s, wrong); });
  REQUIRE(err.has_value());
  CHECK(testutil::message_mentions(err, ".Gl"));
}

TEST_CASE("the state window stacks newest-first and zero-pads") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  std::vector<Vec> hist(4);
  hist[1] = Vec::Constant(1, 1.5);
  hist[2] = Vec::Constant(1, -2.5);
  hist[3] = Vec::Constant(1, 3.5);

  const Vec w1 = custom_window(s, hist, 1, 3);
  REQUIRE(w1.size() == 3);
  CHECK(w1(0) == 1.5);
  CHECK(w1(1) == 0.0);
  CHECK(w1(2) == 0.0);

  const Vec w3 = custom_window(s, hist, 3, 2);
  REQUIRE(w3.size() == 2);
  CHECK(w3(0) == 3.5);
  CHECK(w3(1) == -2.5);

  const Vec w2 = custom_window(s, hist, 2, 1);
  REQUIRE(w2.size() == 1);
  CHECK(w2(0) == -2.5);
}

TEST_CASE("custom actions evaluate the affine form") {
  const json j = {
      {"window", 1},
      {"major", {{"Gw", {{0.5}}}, {"Gc", {{0.25, -0.75}}}, {"g", {0.1}}}},
      {"minors",
       json::array({{{"Gw", {{-0.5}}},
                     {"Gc", {{1.0, 2.0}}},
                     {"Gl", {{-3.0}}},
                     {"g", {0.2}}}})},
  };
  const CustomGains cg = custom_gains_from_json(j);
  const Vec win = Vec::Constant(1, 2.0);
  Vec xc(2);
  xc << 1.0, -1.0;
  const Vec xi = Vec::Constant(1, 0.5);

  const Vec u0 = act_custom_major(cg, 1, win, xc);
  CHECK(u0(0) == doctest::Approx(0.5 * 2.0 + 0.25 * 1.0 + 0.75 * 1.0 + 0.1));

  const Vec u1 = act_custom_minor(cg, 1, 1, win, xc, xi);
  CHECK(u1(0) == doctest::Approx(-0.5 * 2.0 + 1.0 - 2.0 - 3.0 * 0.5 + 0.2));

  // The common component substitutes the agent's block of the common
  // estimate for the agent estimate.
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  const Vec uc = ucom_custom_minor(s, cg, 1, 1, win, xc);
  const Vec via_block = act_custom_minor(cg, 1, 1, win, xc, xc.segment(1, 1));
  CHECK(testutil::bits_equal(uc, via_block));
}

TEST_CASE("the clone gains reproduce the canonical actions") {
  const Scenario s = testutil::load_bundled("two_minor_discrete.json");
  const GainSchedule g = solve_schedules(s);
  const CustomGains cg = testutil::optimal_gain_clone(s, g);
  validate_custom_gains(s, cg);

  const int dxt = s.topology.dx_total();
  for (int t = 1; t <= s.T - 1; ++t) {
    const Vec xc = probe(dxt, 100 + static_cast<std::uint64_t>(t));
    std::vector<Vec> hist(static_cast<std::size_t>(t) + 1, Vec::Zero(1));
    hist[static_cast<std::size_t>(t)] = xc.head(1);
    const Vec win = custom_window(s, hist, t, cg.window);

    CHECK((act_custom_major(cg, t, win, xc) - act_major(s, g, t, xc)).norm() <=
          1e-12);
    for (int i = 1; i <= s.topology.n; ++i) {
      const Vec xi = probe(s.topology.dx[i], 200u + static_cast<std::uint64_t>(10 * t + i));
      const Vec a = act_custom_minor(cg, t, i, win, xc, xi);
      const Vec b = act_minor_linear(s, g, t, i, xc, xi);
      CHECK((a - b).norm() <= 1e-12);
      const Vec ua = ucom_custom_minor(s, cg, t, i, win, xc);
      const Vec ub = ucom_minor(s, g, t, i, xc);
      CHECK((ua - ub).norm() <= 1e-12);
    }
  }
}

TEST_CASE("a gains file loads through the strategy spec") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  const GainSchedule g = solve_schedules(s);
  const CustomGains cg = testutil::optimal_gain_clone(s, g);

  const std::string path = "/tmp/mmlq_clone_gains.json";
  {
    std::ofstream out(path);
    out << clone_gains_json(s, cg).dump(1);
  }
  const Strategy st = strategy_from_spec("custom:" + path);
  CHECK(st.kind == StrategyKind::CustomLinear);
  CHECK(st.custom.window == 1);
  REQUIRE(st.custom.Gc0.M.size() == cg.Gc0.M.size());
  for (std::size_t k = 0; k < cg.Gc0.M.size(); ++k) {
    CHECK((st.custom.Gc0.M[k] - cg.Gc0.M[k]).norm() == 0.0);
  }
  validate_custom_gains(s, st.custom);

  {
    std::ofstream out(path);
    out << "{ not json";
  }
  auto err = testutil::catch_error([&] { load_custom_gains(path); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Usage);
}

}  // TEST_SUITE("controllers")
