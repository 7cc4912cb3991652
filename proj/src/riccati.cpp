#include "mmlq/riccati.hpp"

#include <nlohmann/json.hpp>

namespace mmlq {

Mat op_R(const Mat& P, const Mat& A, const Mat& B, const Mat& Q,
         const Mat& R) {
  Mat BtPA = B.transpose() * P * A;
  Mat delta = sym(R + B.transpose() * P * B);
  Mat gain = solve_spd(delta, BtPA, "op_R");
  return sym(Q + A.transpose() * P * A - BtPA.transpose() * gain);
}

Mat op_G(const Mat& P, const Mat& A, const Mat& B, const Mat& R) {
  Mat delta = sym(R + B.transpose() * P * B);
  return solve_spd(delta, B.transpose() * P * A, "op_G");
}

namespace {

// Innovation covariance and cross term shared by op_K / op_F.
struct PredictorTerms {
  Mat M, MCt, Sinno;
  bool degenerate;  // innovation covariance is numerically zero
};

PredictorTerms predictor_terms(const Mat& P, const Mat& A, const Mat& C,
                               const Mat& Sw, const Mat& Sv) {
  PredictorTerms t;
  t.M = sym(A * P * A.transpose() + Sw);
  t.MCt = t.M * C.transpose();
  t.Sinno = sym(C * t.MCt + Sv);
  // For PSD M, C M C' = 0 forces M C' = 0, so K = 0 is the exact limit.
  t.degenerate =
      t.Sinno.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, t.M.norm());
  return t;
}

}  // namespace

Mat op_K(const Mat& P, const Mat& A, const Mat& C, const Mat& Sw,
         const Mat& Sv) {
  PredictorTerms t = predictor_terms(P, A, C, Sw, Sv);
  if (t.degenerate) return Mat::Zero(t.M.rows(), C.rows());
  return solve_spd(t.Sinno, t.MCt.transpose(), "op_K").transpose();
}

Mat op_F(const Mat& P, const Mat& A, const Mat& C, const Mat& Sw,
         const Mat& Sv) {
  PredictorTerms t = predictor_terms(P, A, C, Sw, Sv);
  if (t.degenerate) return t.M;
  Mat K = solve_spd(t.Sinno, t.MCt.transpose(), "op_F").transpose();
  return sym(t.M - K * t.Sinno * K.transpose());
}

namespace {

void backward(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
              const Mat& QT, int T, std::vector<Mat>& S, std::vector<Mat>& L,
              std::vector<Mat>& Delta) {
  S.assign(static_cast<size_t>(T) + 1, Mat());
  L.assign(static_cast<size_t>(T) + 1, Mat());
  Delta.assign(static_cast<size_t>(T) + 1, Mat());
  S[static_cast<size_t>(T)] = sym(QT);
  for (int t = T - 1; t >= 1; --t) {
    const auto st = static_cast<size_t>(t);
    const Mat& Snext = S[st + 1];
    Delta[st] = sym(R + B.transpose() * Snext * B);
    L[st] = op_G(Snext, A, B, R);
    S[st] = op_R(Snext, A, B, Q, R);
  }
}

}  // namespace

void solve_global(const Scenario& s, std::vector<Mat>& S, std::vector<Mat>& L,
                  std::vector<Mat>& Delta) {
  auto [A, B] = assemble_global(s);
  backward(A, B, s.cost.Q, s.cost.R, s.cost.QT, s.T, S, L, Delta);
}

void solve_local(const Scenario& s, int i, std::vector<Mat>& S,
                 std::vector<Mat>& L, std::vector<Mat>& Delta) {
  const auto k = static_cast<size_t>(i - 1);
  backward(s.sys.Aii[k], s.sys.Bii[k], s.Qii(i), s.Rii(i), s.QTii(i), s.T, S,
           L, Delta);
}

GainSchedule solve_schedules(const Scenario& s) {
  GainSchedule g;
  g.T = s.T;
  solve_global(s, g.Scom, g.Lcom, g.DeltaCom);
  g.Sloc.resize(static_cast<size_t>(s.topology.n));
  g.Lloc.resize(static_cast<size_t>(s.topology.n));
  g.DeltaLoc.resize(static_cast<size_t>(s.topology.n));
  for (int i = 1; i <= s.topology.n; ++i) {
    const auto k = static_cast<size_t>(i - 1);
    solve_local(s, i, g.Sloc[k], g.Lloc[k], g.DeltaLoc[k]);
  }
  return g;
}

Mat GainSchedule::Lcom_row(const Scenario& s, int t, int i) const {
  const Mat& L = Lcom[static_cast<size_t>(t)];
  return L.middleRows(s.topology.u_offset(i),
                      s.topology.du[static_cast<size_t>(i)]);
}

FilterSchedule filter_schedule(const Scenario& s, int i) {
  const auto k = static_cast<size_t>(i - 1);
  const Mat& A = s.sys.Aii[k];
  const Mat& C = s.sys.Cii[k];
  Mat Sw = s.noise.w[static_cast<size_t>(i)].variance();
  Mat Sv = s.noise.v[k].variance();
  FilterSchedule f;
  f.K.assign(static_cast<size_t>(s.T) + 1, Mat());
  f.P.assign(static_cast<size_t>(s.T) + 1, Mat());
  f.P[1] = s.noise.x1[static_cast<size_t>(i)].variance();
  f.K[1] = Mat::Zero(A.rows(), C.rows());
  for (int t = 2; t <= s.T; ++t) {
    const auto st = static_cast<size_t>(t);
    f.K[st] = op_K(f.P[st - 1], A, C, Sw, Sv);
    f.P[st] = op_F(f.P[st - 1], A, C, Sw, Sv);
  }
  return f;
}

json schedule_to_json(const Scenario& s, const GainSchedule& g,
                      const std::vector<FilterSchedule>& f) {
  json j;
  j["horizon"] = s.T;
  auto dump_range = [](const std::vector<Mat>& v, int lo, int hi) {
    json arr = json::array();
    for (int t = lo; t <= hi; ++t)
      arr.push_back(mat_to_json(v[static_cast<size_t>(t)]));
    return arr;
  };
  j["Scom"] = dump_range(g.Scom, 1, s.T);
  j["Lcom"] = dump_range(g.Lcom, 1, s.T - 1);
  j["DeltaCom"] = dump_range(g.DeltaCom, 1, s.T - 1);
  json minors = json::array();
  for (int i = 1; i <= s.topology.n; ++i) {
    const auto k = static_cast<size_t>(i - 1);
    json m;
    m["Sloc"] = dump_range(g.Sloc[k], 1, s.T);
    m["Lloc"] = dump_range(g.Lloc[k], 1, s.T - 1);
    m["DeltaLoc"] = dump_range(g.DeltaLoc[k], 1, s.T - 1);
    m["K"] = dump_range(f[k].K, 1, s.T);
    m["P"] = dump_range(f[k].P, 1, s.T);
    minors.push_back(m);
  }
  j["minors"] = minors;
  return j;
}

}  // namespace mmlq
