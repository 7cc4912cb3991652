#include <doctest.h>

#include <atomic>
#include <cmath>
#include <string>

#include "helpers.hpp"
#include "mmlq/oracle.hpp"
#include "mmlq/riccati.hpp"
#include "mmlq/simulation.hpp"
#include "mmlq/tolerances.hpp"
#include "mmlq/verification.hpp"

using namespace mmlq;

namespace {

bool has_check(const CheckReport& rep, const std::string& name) {
  for (const CheckResult& r : rep.results) {
    if (r.name == name) return true;
  }
  return false;
}

void require_all_pass(const CheckReport& rep) {
  REQUIRE(!rep.results.empty());
  for (const CheckResult& r : rep.results) {
    INFO(r.name << " [" << r.mode << "]: statistic=" << r.statistic
                << " tolerance=" << r.tolerance << " " << r.detail);
    CHECK(r.pass);
  }
  CHECK(rep.pass());
}

}  // namespace

TEST_SUITE("verification") {

TEST_CASE("moment accumulator mean and standard error") {
  MomentAcc acc;
  acc.add(1.0);
  acc.add(2.0);
  acc.add(3.0);
  CHECK(acc.n == 3);
  CHECK(acc.mean() == doctest::Approx(2.0).epsilon(1e-15));
  // Sample variance 1, so the standard error is sqrt(1/3).
  CHECK(acc.std_error() == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-13));
  CHECK(acc.sigma_statistic() ==
        doctest::Approx(2.0 / std::sqrt(1.0 / 3.0)).epsilon(1e-13));

  const MomentAcc empty;
  CHECK(empty.mean() == 0.0);
  CHECK(empty.std_error() == 0.0);
  CHECK(empty.sigma_statistic() == 0.0);
}

TEST_CASE("moment accumulator degenerate statistics") {
  MomentAcc zeros;
  for (int k = 0; k < 5; ++k) zeros.add(0.0);
  CHECK(zeros.mean() == 0.0);
  CHECK(zeros.std_error() == 0.0);
  CHECK(zeros.sigma_statistic() == 0.0);

  // Means below the exact tolerance count as numerically zero even when the
  // spread is zero too.
  MomentAcc tiny;
  tiny.add(5e-11);
  tiny.add(7e-11);
  CHECK(tiny.sigma_statistic() == 0.0);

  // A constant, clearly nonzero sample has no spread: the statistic must be
  // huge so the check fails loudly instead of dividing by zero.
  MomentAcc constant;
  for (int k = 0; k < 3; ++k) constant.add(1.0);
  CHECK(constant.std_error() == 0.0);
  CHECK(constant.sigma_statistic() >= 1e299);

  MomentAcc single;
  single.add(5.0);
  CHECK(single.std_error() == 0.0);  // one sample has no spread estimate
  CHECK(single.sigma_statistic() >= 1e299);
}

TEST_CASE("check constructors fill modes, tolerances, and verdicts") {
  const CheckResult a = mc_check("alpha", 3.5, "note");
  CHECK(a.mode == "mc");
  CHECK(a.statistic == 3.5);
  CHECK(a.tolerance == tol::kMcSigmas);
  CHECK(a.pass);
  CHECK(a.detail == "note");
  CHECK_FALSE(mc_check("alpha", 4.5).pass);

  const CheckResult b = exact_check("beta", 5e-11);
  CHECK(b.mode == "exact");
  CHECK(b.tolerance == tol::kExact);
  CHECK(b.pass);
  CHECK_FALSE(exact_check("beta", 2e-10).pass);

  const CheckResult c = bitwise_check("gamma", true);
  CHECK(c.mode == "bitwise");
  CHECK(c.statistic == 0.0);
  CHECK(c.tolerance == 0.0);
  CHECK(c.pass);
  const CheckResult d = bitwise_check("gamma", false);
  CHECK(d.statistic == 1.0);
  CHECK_FALSE(d.pass);
}

TEST_CASE("check report json shape and append") {
  CheckReport rep;
  rep.results.push_back(mc_check("alpha", 3.5, "note"));
  CHECK(rep.pass());

  CheckReport more;
  more.results.push_back(bitwise_check("gamma", false));
  more.results.push_back(exact_check("beta", 0.0));
  rep.append(more);
  REQUIRE(rep.results.size() == 3);
  CHECK(rep.results[1].name == "gamma");
  CHECK_FALSE(rep.pass());

  const json j = rep.to_json();
  CHECK_FALSE(j.at("pass").get<bool>());
  REQUIRE(j.at("checks").size() == 3);
  const json& j0 = j.at("checks").at(0);
  CHECK(j0.at("check").get<std::string>() == "alpha");
  CHECK(j0.at("mode").get<std::string>() == "mc");
  CHECK(j0.at("statistic").get<double>() == 3.5);
  CHECK(j0.at("tolerance").get<double>() == tol::kMcSigmas);
  CHECK(j0.at("pass").get<bool>());
  CHECK(j0.at("detail").get<std::string>() == "note");
  // Empty details are omitted rather than serialized as "".
  CHECK_FALSE(j.at("checks").at(1).contains("detail"));
}

TEST_CASE("per-step cost split identities hold") {
  {
    const Scenario s = testutil::load_bundled("micro_discrete.json");
    const SimContext ctx =
        make_context(s, testutil::strategy(StrategyKind::Optimal));
    const CheckReport rep = check_cost_split(ctx, 1500, 21);
    require_all_pass(rep);
    CHECK(has_check(rep, "state-cost-split"));
    CHECK(has_check(rep, "control-cost-split"));
    for (const CheckResult& r : rep.results) CHECK(r.mode == "mc");
  }
  {
    const Scenario s = testutil::load_bundled("scalar_gaussian.json");
    const SimContext ctx =
        make_context(s, testutil::strategy(StrategyKind::BestLinear));
    require_all_pass(check_cost_split(ctx, 1200, 22));
  }

  const Scenario s = testutil::load_bundled("micro_discrete.json");
  const SimContext ctx =
      make_context(s, testutil::strategy(StrategyKind::Optimal));
  const auto err = testutil::catch_error([&] { check_cost_split(ctx, 0, 1); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Usage);
}

TEST_CASE("total decomposition holds and the floor is control-free") {
  const Scenario s = testutil::load_bundled("micro_discrete.json");
  const SimContext opt =
      make_context(s, testutil::strategy(StrategyKind::Optimal));
  const SimContext bl =
      make_context(s, testutil::strategy(StrategyKind::BestLinear));
  const CheckReport rep = check_total_decomposition(opt, bl, 1500, 23);
  require_all_pass(rep);
  CHECK(has_check(rep, "cost-decomposition[optimal]"));
  CHECK(has_check(rep, "cost-decomposition[best-linear]"));
  CHECK(has_check(rep, "stochastic-cost-control-free"));
  for (const CheckResult& r : rep.results) {
    if (r.name == "stochastic-cost-control-free") {
      CHECK(r.mode == "bitwise");
      CHECK(r.statistic == 0.0);
    }
  }

  const Scenario sg = testutil::load_bundled("scalar_gaussian.json");
  const SimContext opt_g =
      make_context(sg, testutil::strategy(StrategyKind::Optimal));
  const SimContext bl_g =
      make_context(sg, testutil::strategy(StrategyKind::BestLinear));
  require_all_pass(check_total_decomposition(opt_g, bl_g, 1500, 24));
}

TEST_CASE("projection split vanishes for the canonical strategies") {
  const Scenario s = testutil::load_bundled("micro_discrete.json");
  {
    const SimContext ctx =
        make_context(s, testutil::strategy(StrategyKind::Optimal));
    const CheckReport rep =
        check_projection_split(ctx, 1500, 31, EstimateMode::ConditionalMean);
    require_all_pass(rep);
    CHECK(has_check(rep, "common-cost-projection-split"));
    CHECK(has_check(rep, "local-cost-projection-split"));
    CHECK(has_check(rep, "common-estimate-cost-zero"));
    CHECK(has_check(rep, "local-estimate-cost-zero"));
  }
  {
    const SimContext ctx =
        make_context(s, testutil::strategy(StrategyKind::BestLinear));
    require_all_pass(
        check_projection_split(ctx, 1500, 32, EstimateMode::LinearProjection));
  }
  {
    // A custom strategy still satisfies the split identity under the linear
    // projection, but its estimate terms have no reason to vanish, so those
    // checks are skipped.
    Strategy st = testutil::strategy(StrategyKind::CustomLinear);
    st.custom = testutil::optimal_gain_clone(s, solve_schedules(s));
    const SimContext ctx = make_context(s, st);
    const CheckReport rep =
        check_projection_split(ctx, 1500, 33, EstimateMode::LinearProjection);
    require_all_pass(rep);
    CHECK_FALSE(has_check(rep, "common-estimate-cost-zero"));
    CHECK_FALSE(has_check(rep, "local-estimate-cost-zero"));
  }
}

TEST_CASE("conditional independence check needs two minors and passes") {
  const Scenario one = testutil::load_bundled("scalar_gaussian.json");
  const SimContext ctx1 =
      make_context(one, testutil::strategy(StrategyKind::Optimal));
  const auto err =
      testutil::catch_error([&] { check_conditional_independence(ctx1, 10, 1); });
  REQUIRE(err.has_value());
  CHECK(err->first == ErrorKind::Validation);
  CHECK(testutil::message_mentions(err, "two minor"));

  const Scenario two = testutil::load_bundled("two_minor_discrete.json");
  const SimContext ctx2 =
      make_context(two, testutil::strategy(StrategyKind::Optimal));
  const auto bad =
      testutil::catch_error([&] { check_conditional_independence(ctx2, 0, 1); });
  REQUIRE(bad.has_value());
  CHECK(bad->first == ErrorKind::Usage);

  const CheckReport rep = check_conditional_independence(ctx2, 1500, 34);
  require_all_pass(rep);
  CHECK(has_check(rep, "conditional-cross-covariance"));
}

TEST_CASE("property suite passes for both canonical strategies") {
  {
    const Scenario s = testutil::load_bundled("micro_discrete.json");
    const SimContext ctx =
        make_context(s, testutil::strategy(StrategyKind::Optimal));
    const CheckReport rep =
        check_property_suite(ctx, 1500, 41, EstimateMode::ConditionalMean);
    require_all_pass(rep);
    CHECK(has_check(rep, "major-local-control-zero"));
    CHECK(has_check(rep, "major-local-state-zero"));
    CHECK(has_check(rep, "common-information-measurable"));
    CHECK(has_check(rep, "errors-control-free"));
    CHECK(has_check(rep, "control-split-regression"));
  }
  {
    const Scenario s = testutil::load_bundled("scalar_gaussian.json");
    const SimContext ctx =
        make_context(s, testutil::strategy(StrategyKind::BestLinear));
    require_all_pass(
        check_property_suite(ctx, 1200, 42, EstimateMode::LinearProjection));
  }
}

TEST_CASE("exact enumeration checks pass on the discrete scenarios") {
  {
    const Scenario s = testutil::load_bundled("micro_discrete.json");
    const CheckReport rep = oracle_exact_checks(s);
    require_all_pass(rep);
    CHECK(has_check(rep, "common-control-closed-form"));
    CHECK(has_check(rep, "control-split-orthogonality"));
    CHECK(has_check(rep, "state-cost-split"));
    for (const CheckResult& r : rep.results) {
      CHECK((r.mode == "exact" || r.mode == "bitwise"));
    }
  }
  {
    const Scenario s = testutil::load_bundled("two_minor_discrete.json");
    require_all_pass(oracle_exact_checks(s));
  }
}

TEST_CASE("decomposed evaluation reports consistent means") {
  const Scenario s = testutil::load_bundled("micro_discrete.json");
  const SimContext ctx =
      make_context(s, testutil::strategy(StrategyKind::Optimal));
  const long N = 800;

  std::atomic<long> seen{0};
  const CostReport rep = evaluate_decomposed(
      ctx, N, 7, false, [&](const Trajectory&, long) { ++seen; });
  CHECK(seen.load() == N);
  REQUIRE(rep.has_decomposition);
  REQUIRE(rep.Jloc.size() == static_cast<std::size_t>(s.topology.n));
  CHECK(rep.trials == N);

  // Same trials as a plain evaluation: the observer does not perturb costs.
  const CostReport plain = evaluate(ctx, N, 7);
  CHECK(rep.mean == plain.mean);
  CHECK(rep.std_error == plain.std_error);

  double total = rep.Jcom + rep.Jstoc + rep.residual;
  for (double jl : rep.Jloc) total += jl;
  CHECK(std::abs(rep.mean - total) <=
        1e-9 * std::max(1.0, std::abs(rep.mean)));
  // The decomposition holds in expectation, so the mean residual is small
  // relative to the cost even at this sample size.
  CHECK(std::abs(rep.residual) <= 0.2 * std::abs(rep.mean));

  const json j = rep.to_json();
  REQUIRE(j.contains("decomposition"));
  const json& dj = j.at("decomposition");
  CHECK(dj.at("Jcom").get<double>() == rep.Jcom);
  CHECK(dj.at("Jstoc").get<double>() == rep.Jstoc);
  CHECK(dj.at("residual").get<double>() == rep.residual);
  REQUIRE(dj.at("Jloc").size() == rep.Jloc.size());
  CHECK(dj.at("Jloc").at(0).get<double>() == rep.Jloc[0]);
}

}  // TEST_SUITE
