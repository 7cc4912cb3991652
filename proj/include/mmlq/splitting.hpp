#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "mmlq/simulation.hpp"

namespace mmlq {

// Common/local/stochastic decomposition along one trajectory:
//   xcom(t+1) = A xcom(t) + B ucom(t),   xcom(1) = 0
//   xloc(t+1) = A xloc(t) + B uloc(t),   xloc(1) = 0
//   xstoc(t+1) = A xstoc(t) + w(t),      xstoc(1) = x(1)
// with the observation split ycom_i = C_ii xcom_i, yloc_i = C_ii xloc_i,
// ystoc_i = C_ii xstoc_i + v_i, and the combined variables
// zcom = xcom + xstoc (stacked), zloc_i = xloc_i + xstoc_i (block i).
struct SplitTrajectory {
  std::vector<Vec> ucom, uloc;         // t = 1..T-1
  std::vector<Vec> xcom, xloc, xstoc;  // t = 1..T, stacked
  std::vector<std::vector<Vec>> ycom, yloc, ystoc;  // [minor-1][t]
  std::vector<Vec> zcom;               // t = 1..T, stacked
  std::vector<std::vector<Vec>> zloc;  // [minor-1][t]
};

using ControlSplit = std::pair<std::vector<Vec>, std::vector<Vec>>;

// Control split per trajectory: ucom(t) estimates E[u(t) | common info],
// uloc = u - ucom. Trajectories carrying the strategy's closed-form split use
// it directly; otherwise the split is fit by least squares of u(t) on
// [1; x0(1:t); u0(1:t-1)] across the batch (at least 100 trajectories).
std::vector<ControlSplit> split_controls(const Scenario& s,
                                         const std::vector<Trajectory>& batch);

// Iterates the three state recursions and the observation split, asserting
// the reconstruction x = xcom + xloc + xstoc at every step.
SplitTrajectory propagate_splits(const Scenario& s, const Trajectory& traj,
                                 const std::vector<Vec>& ucom,
                                 const std::vector<Vec>& uloc);

// Rebuilds the information sets {x0(1:t), u0(1:t-1), y_i(1:t), u_i(1:t-1)}
// from the stochastic components {xstoc_0(1:t), ystoc_i(1:t)} alone, under
// the context's strategy, and returns the worst relative deviation from the
// stored trajectory. Exercises the static-reduction property: the stochastic
// components generate the same information as the raw signals.
double reconstruction_residual(const SimContext& ctx, const Trajectory& traj,
                               const SplitTrajectory& split,
                               std::uint64_t seed, std::uint64_t trial);

// CSV rows: t, component, agent, entry index, value.
void write_split_csv(std::ostream& out, const Scenario& s,
                     const SplitTrajectory& split);

}  // namespace mmlq
