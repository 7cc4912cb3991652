#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mmlq/riccati.hpp"
#include "mmlq/tolerances.hpp"

using namespace mmlq;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

// Frozen outputs of tests/oracles/scalar_recursions.py (plain-Python floats,
// no shared code with the library). Regenerate by running that script.
constexpr double kOpR = 1.5;
constexpr double kOpG = 0.5;
constexpr double kOpK = 0.66666666666666663;
constexpr double kOpF = 0.66666666666666674;
constexpr double kOpKTinySignal = 1.9999999999960002e-12;
constexpr double kS3[] = {1.6000000000000001, 1.5, 1.0};
constexpr double kL3[] = {0.59999999999999998, 0.5};
constexpr double kSGen[] = {2.8276933706593592, 2.8278681318681311,
                            2.8295211267605627, 2.845217391304347, 3.0};
constexpr double kLGen[] = {1.1495741259157781, 1.1498168498168497,
                            1.152112676056338, 1.173913043478261};
constexpr double kKFilt[] = {0.62371452921004644, 0.47269050685854058,
                             0.4509497662929321, 0.44755478326537762};
constexpr double kPFilt[] = {0.23509239947147931, 0.17816796027744997,
                             0.16997337344887437, 0.16869372600002688};

void check_schedule_shape(const Scenario& s, const GainSchedule& g) {
  CHECK(g.T == s.T);
  const double scale_bound = 1e3;  // sanity guard against blow-ups at desk scale
  for (int t = 1; t <= s.T; ++t) {
    CHECK(asymmetry(g.Scom[t]) <= tol::kSymRel);
    CHECK(min_eigenvalue_sym(g.Scom[t]) >=
          -tol::kPsdRel * std::max(1.0, g.Scom[t].norm()));
    CHECK(g.Scom[t].norm() < scale_bound);
  }
  for (int t = 1; t <= s.T - 1; ++t) {
    CHECK(asymmetry(g.DeltaCom[t]) <= tol::kSymRel);
    CHECK(min_eigenvalue_sym(g.DeltaCom[t]) > 0.0);
  }
  for (int i = 1; i <= s.topology.n; ++i) {
    for (int t = 1; t <= s.T; ++t) {
      CHECK(asymmetry(g.Sloc[i - 1][t]) <= tol::kSymRel);
      CHECK(min_eigenvalue_sym(g.Sloc[i - 1][t]) >=
            -tol::kPsdRel * std::max(1.0, g.Sloc[i - 1][t].norm()));
    }
    for (int t = 1; t <= s.T - 1; ++t) {
      CHECK(min_eigenvalue_sym(g.DeltaLoc[i - 1][t]) > 0.0);
    }
  }
}

}  // namespace

TEST_SUITE("riccati") {

TEST_CASE("operators match the frozen scalar oracle") {
  const Mat one = m1(1.0);
  CHECK(op_R(one, one, one, one, one)(0, 0) ==
        doctest::Approx(kOpR).epsilon(1e-14));
  CHECK(op_G(one, one, one, one)(0, 0) ==
        doctest::Approx(kOpG).epsilon(1e-14));
  CHECK(op_K(one, one, one, one, one)(0, 0) ==
        doctest::Approx(kOpK).epsilon(1e-14));
  CHECK(op_F(one, one, one, one, one)(0, 0) ==
        doctest::Approx(kOpF).epsilon(1e-14));
  // Near-uninformative observations drive the gain to zero.
  CHECK(op_K(one, one, one, one, m1(1e12))(0, 0) ==
        doctest::Approx(kOpKTinySignal).epsilon(1e-12));
}

TEST_CASE("unit-coefficient backward recursion matches the oracle") {
  std::vector<Mat> S(4), L(3);
  const Mat one = m1(1.0);
  S[3] = one;
  for (int t = 2; t >= 1; --t) {
    L[t] = op_G(S[t + 1], one, one, one);
    S[t] = op_R(S[t + 1], one, one, one, one);
  }
  for (int t = 1; t <= 3; ++t) {
    CHECK(S[t](0, 0) == doctest::Approx(kS3[t - 1]).epsilon(1e-14));
  }
  for (int t = 1; t <= 2; ++t) {
    CHECK(L[t](0, 0) == doctest::Approx(kL3[t - 1]).epsilon(1e-14));
  }
}

TEST_CASE("general-coefficient backward recursion matches the oracle") {
  const Mat a = m1(0.9), b = m1(0.5), q = m1(2.0), r = m1(0.4), qt = m1(3.0);
  std::vector<Mat> S(6), L(5);
  S[5] = qt;
  for (int t = 4; t >= 1; --t) {
    L[t] = op_G(S[t + 1], a, b, r);
    S[t] = op_R(S[t + 1], a, b, q, r);
  }
  for (int t = 1; t <= 5; ++t) {
    CHECK(S[t](0, 0) == doctest::Approx(kSGen[t - 1]).epsilon(1e-14));
  }
  for (int t = 1; t <= 4; ++t) {
    CHECK(L[t](0, 0) == doctest::Approx(kLGen[t - 1]).epsilon(1e-14));
  }
}

TEST_CASE("filter operator recursion matches the oracle") {
  const Mat a = m1(0.95), c = m1(1.3), sw = m1(0.25), sv = m1(0.49);
  Mat p = m1(1.1);
  for (int t = 2; t <= 5; ++t) {
    const Mat k = op_K(p, a, c, sw, sv);
    p = op_F(p, a, c, sw, sv);
    CHECK(k(0, 0) == doctest::Approx(kKFilt[t - 2]).epsilon(1e-14));
    CHECK(p(0, 0) == doctest::Approx(kPFilt[t - 2]).epsilon(1e-14));
  }
}

TEST_CASE("degenerate innovation covariance yields a zero gain") {
  // Both the observation matrix and the noise vanish: K = 0, F = M.
  const Mat p = m1(0.5), a = m1(0.9), c = m1(0.0), sw = m1(0.2), sv = m1(0.0);
  CHECK(op_K(p, a, c, sw, sv)(0, 0) == 0.0);
  CHECK(op_F(p, a, c, sw, sv)(0, 0) ==
        doctest::Approx(0.9 * 0.5 * 0.9 + 0.2).epsilon(1e-14));
}

TEST_CASE("filter schedule runs the operator recursion from the prior") {
  const Scenario s = testutil::scalar_filter_scenario();
  const FilterSchedule f = filter_schedule(s, 1);
  CHECK(f.K[1].norm() == 0.0);
  CHECK(f.P[1](0, 0) == doctest::Approx(1.1).epsilon(1e-15));
  for (int t = 2; t <= s.T; ++t) {
    CHECK(f.K[t](0, 0) == doctest::Approx(kKFilt[t - 2]).epsilon(1e-13));
    CHECK(f.P[t](0, 0) == doctest::Approx(kPFilt[t - 2]).epsilon(1e-13));
  }
}

TEST_CASE("global solve equals an independent stacked recursion") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  auto [A, B] = assemble_global(s);
  std::vector<Mat> S(s.T + 1), L(s.T), D(s.T);
  S[s.T] = s.cost.QT;
  for (int t = s.T - 1; t >= 1; --t) {
    L[t] = op_G(S[t + 1], A, B, s.cost.R);
    D[t] = s.cost.R + B.transpose() * S[t + 1] * B;
    S[t] = op_R(S[t + 1], A, B, s.cost.Q, s.cost.R);
  }

  const GainSchedule g = solve_schedules(s);
  for (int t = 1; t <= s.T; ++t) {
    CHECK((g.Scom[t] - S[t]).norm() <= 1e-12 * std::max(1.0, S[t].norm()));
  }
  for (int t = 1; t <= s.T - 1; ++t) {
    CHECK((g.Lcom[t] - L[t]).norm() <= 1e-12 * std::max(1.0, L[t].norm()));
    CHECK((g.DeltaCom[t] - sym(D[t])).norm() <=
          1e-12 * std::max(1.0, D[t].norm()));
  }
}

TEST_CASE("local solve runs on the minor diagonal blocks") {
  const Scenario s = testutil::load_bundled("scalar_gaussian.json");
  const int i = 1;
  const Mat a = s.sys.Aii[0], b = s.sys.Bii[0];
  const Mat q = s.Qii(i), r = s.Rii(i), qt = s.QTii(i);
  std::vector<Mat> S(s.T + 1), L(s.T);
  S[s.T] = qt;
  for (int t = s.T - 1; t >= 1; --t) {
    L[t] = op_G(S[t + 1], a, b, r);
    S[t] = op_R(S[t + 1], a, b, q, r);
  }
  const GainSchedule g = solve_schedules(s);
  for (int t = 1; t <= s.T; ++t) {
    CHECK(g.Sloc[0][t](0, 0) == doctest::Approx(S[t](0, 0)).epsilon(1e-13));
  }
  for (int t = 1; t <= s.T - 1; ++t) {
    CHECK(g.Lloc[0][t](0, 0) == doctest::Approx(L[t](0, 0)).epsilon(1e-13));
  }
}

TEST_CASE("schedules on the bundled scenarios are symmetric and definite") {
  for (const char* name :
       {"scalar_gaussian.json", "micro_discrete.json", "bimodal.json",
        "state_feedback.json", "two_minor_discrete.json",
        "showcase_mixed.json"}) {
    CAPTURE(name);
    const Scenario s = testutil::load_bundled(name);
    check_schedule_shape(s, solve_schedules(s));
  }
}

TEST_CASE("gain row blocks stack back to the full gain") {
  const Scenario s = testutil::load_bundled("two_minor_discrete.json");
  const GainSchedule g = solve_schedules(s);
  for (int t = 1; t <= s.T - 1; ++t) {
    Mat stacked(s.topology.du_total(), s.topology.dx_total());
    int at = 0;
    for (int i = 0; i <= s.topology.n; ++i) {
      const Mat row = g.Lcom_row(s, t, i);
      CHECK(row.rows() == s.topology.du[i]);
      stacked.middleRows(at, row.rows()) = row;
      at += static_cast<int>(row.rows());
    }
    CHECK((stacked - g.Lcom[t]).norm() == 0.0);
  }
}

TEST_CASE("schedule json lists every time index") {
  const Scenario s = testutil::scalar_filter_scenario();
  const GainSchedule g = solve_schedules(s);
  const std::vector<FilterSchedule> fs = {filter_schedule(s, 1)};
  const json j = schedule_to_json(s, g, fs);
  CHECK(j.at("horizon").get<int>() == s.T);
  CHECK(j.at("Scom").size() == static_cast<std::size_t>(s.T));
  CHECK(j.at("Lcom").size() == static_cast<std::size_t>(s.T - 1));
  CHECK(j.at("DeltaCom").size() == static_cast<std::size_t>(s.T - 1));
  REQUIRE(j.at("minors").size() == 1);
  const json& m = j.at("minors").at(0);
  CHECK(m.at("Sloc").size() == static_cast<std::size_t>(s.T));
  CHECK(m.at("K").size() == static_cast<std::size_t>(s.T));
  CHECK(m.at("P").size() == static_cast<std::size_t>(s.T));
}

}  // TEST_SUITE("riccati")
