#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmlq/linalg.hpp"
#include "mmlq/noise.hpp"

namespace mmlq {

// One major agent (index 0) and n minor agents (1..n). The major agent has no
// observation channel; each minor agent observes its own state through C_ii.
struct AgentTopology {
  int n = 0;                // number of minor agents
  std::vector<int> dx;      // state dims, size n+1
  std::vector<int> du;      // control dims, size n+1
  std::vector<int> dy;      // observation dims, size n (minor agents only)

  int dx_total() const;
  int du_total() const;
  int x_offset(int i) const;  // offset of agent i's block in the stacked state
  int u_offset(int i) const;
};

// Block-structured dynamics. The stacked A and B are block lower triangular:
// minor agents are driven by the major agent but not by each other, and
// nothing feeds back into the major agent.
struct SystemMatrices {
  Mat A00, B00;
  std::vector<Mat> Ai0, Aii, Bi0, Bii, Cii;  // index 0 <-> minor agent 1
};

struct CostSpec {
  Mat Q, R, QT;
};

struct NoiseSpec {
  std::vector<NoiseDist> x1;  // initial states, size n+1
  std::vector<NoiseDist> w;   // process noise, size n+1
  std::vector<NoiseDist> v;   // observation noise, size n
};

struct Scenario {
  AgentTopology topology;
  SystemMatrices sys;
  CostSpec cost;
  NoiseSpec noise;
  int T = 0;                  // horizon; per-step cost at t=1..T-1, terminal at T
  std::uint64_t seed = 0;

  // Diagonal blocks of the cost matrices for minor agent i (1-based).
  Mat Qii(int i) const;
  Mat Rii(int i) const;
  Mat QTii(int i) const;
};

struct Violation {
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool pass() const { return violations.empty(); }
  std::string str() const;
};

// Reports every problem found (dimensions, sparsity, PSD/PD, noise moments);
// never throws.
ValidationReport validate_scenario(const Scenario& s);

// Stacks the blocks into the full A (dx_total x dx_total) and
// B (dx_total x du_total).
std::pair<Mat, Mat> assemble_global(const Scenario& s);

// Checks the block sparsity pattern of dense stacked matrices: every
// (i, j) block with i != j, i, j >= 1 and every (0, j) block with j >= 1
// must be zero. Appends violations to `out`.
void check_global_sparsity(const Mat& A, const Mat& B,
                           const AgentTopology& topo,
                           std::vector<Violation>& out);

// JSON schema: {topology, matrices, cost, noise, horizon, seed}. The
// validator is the schema authority; unknown keys are errors. `matrices`
// accepts either per-block form (A00/B00/minors) or dense stacked form
// (A/B/Cii) which is sliced after a sparsity check.
Scenario scenario_from_json(const json& j);

// Reads and parses a scenario file. JSON syntax errors -> usage error;
// schema/validation problems -> validation error.
Scenario load_scenario(const std::string& path);

}  // namespace mmlq
