#pragma once

#include <vector>

#include "mmlq/scenario.hpp"

namespace mmlq {

// Q + A'PA - A'PB (R + B'PB)^{-1} B'PA, symmetrized.
Mat op_R(const Mat& P, const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

// (R + B'PB)^{-1} B'PA.
Mat op_G(const Mat& P, const Mat& A, const Mat& B, const Mat& R);

// Predictor-form filter gain and error-covariance update. With
// M = A P A' + Sw:  K = M C' (C M C' + Sv)^{-1},
//                   F = M - K (C M C' + Sv) K'.
// A vanishing innovation covariance (possible when both Sv and M C' are
// zero) yields K = 0, F = M.
Mat op_K(const Mat& P, const Mat& A, const Mat& C, const Mat& Sw,
         const Mat& Sv);
Mat op_F(const Mat& P, const Mat& A, const Mat& C, const Mat& Sw,
         const Mat& Sv);

// Time-indexed backward-recursion solutions. All arrays are 1-based: index t
// runs 1..T (slot 0 unused). S is defined for t = 1..T; L and Delta for
// t = 1..T-1.
struct GainSchedule {
  int T = 0;
  std::vector<Mat> Scom, Lcom, DeltaCom;
  std::vector<std::vector<Mat>> Sloc, Lloc, DeltaLoc;  // [i-1][t], minor i

  // Row block of Lcom(t) belonging to agent i's control (0 = major).
  Mat Lcom_row(const Scenario& s, int t, int i) const;
};

// Backward recursion for the stacked system: S(T) = QT,
// S(t) = op_R(S(t+1), A, B, Q, R); L(t) = op_G(S(t+1), A, B, R);
// Delta(t) = R + B' S(t+1) B.
void solve_global(const Scenario& s, std::vector<Mat>& S, std::vector<Mat>& L,
                  std::vector<Mat>& Delta);

// Same recursion on minor agent i's diagonal blocks
// (A_ii, B_ii, Q_ii, R_ii, [QT]_ii).
void solve_local(const Scenario& s, int i, std::vector<Mat>& S,
                 std::vector<Mat>& L, std::vector<Mat>& Delta);

GainSchedule solve_schedules(const Scenario& s);

// Control-free filter schedule for minor agent i: K(1) = 0, P(1) = Sigma_x;
// K(t) = op_K(P(t-1), ...), P(t) = op_F(P(t-1), ...) for t >= 2.
struct FilterSchedule {
  std::vector<Mat> K, P;  // 1-based, t = 1..T
};

FilterSchedule filter_schedule(const Scenario& s, int i);

json schedule_to_json(const Scenario& s, const GainSchedule& g,
                      const std::vector<FilterSchedule>& f);

}  // namespace mmlq
