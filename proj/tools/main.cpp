// Command-line front end: solve schedules, run simulations, run verification
// suites. Exit codes: 0 pass, 1 check failure, 2 usage/parse error,
// 3 validation error, 4 numerical failure.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmlq/controllers.hpp"
#include "mmlq/errors.hpp"
#include "mmlq/estimators.hpp"
#include "mmlq/linalg.hpp"
#include "mmlq/oracle.hpp"
#include "mmlq/riccati.hpp"
#include "mmlq/scenario.hpp"
#include "mmlq/simulation.hpp"
#include "mmlq/splitting.hpp"
#include "mmlq/verification.hpp"

namespace {

using namespace mmlq;

double min_eig(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()));
  return es.eigenvalues().minCoeff();
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(out_path);
    if (!out) throw usage_error("cannot open output file: " + out_path);
    out << j.dump(2) << '\n';
  }
}

int cmd_solve(const std::string& scenario_path, const std::string& out_path) {
  const Scenario s = load_scenario(scenario_path);
  const GainSchedule g = solve_schedules(s);
  std::vector<FilterSchedule> fs;
  fs.reserve(static_cast<std::size_t>(s.topology.n));
  for (int i = 1; i <= s.topology.n; ++i) fs.push_back(filter_schedule(s, i));

  // Summary on stderr so stdout stays machine-parseable.
  std::cerr << "horizon T=" << s.T << ", minor agents n=" << s.topology.n
            << "\nstate dims:";
  for (int d : s.topology.dx) std::cerr << ' ' << d;
  std::cerr << "\ncontrol dims:";
  for (int d : s.topology.du) std::cerr << ' ' << d;
  double smin = min_eig(g.Scom[1]), dmin = min_eig(g.DeltaCom[1]);
  for (int t = 1; t <= s.T; ++t) smin = std::min(smin, min_eig(g.Scom[t]));
  for (int t = 1; t <= s.T - 1; ++t) {
    dmin = std::min(dmin, min_eig(g.DeltaCom[t]));
  }
  for (int i = 1; i <= s.topology.n; ++i) {
    for (int t = 1; t <= s.T; ++t) {
      smin = std::min(smin, min_eig(g.Sloc[i - 1][t]));
    }
    for (int t = 1; t <= s.T - 1; ++t) {
      dmin = std::min(dmin, min_eig(g.DeltaLoc[i - 1][t]));
    }
  }
  std::cerr << "\nmin eigenvalue over value matrices: " << smin
            << "\nmin eigenvalue over control weights: " << dmin << '\n';

  emit(schedule_to_json(s, g, fs), out_path);
  return 0;
}

int cmd_simulate(const std::string& scenario_path,
                 const std::string& strategy_spec, long trials,
                 std::uint64_t seed, bool decompose, bool parallel,
                 const std::string& out_path, const std::string& csv_path,
                 const std::string& split_csv_path) {
  if (trials < 1) throw usage_error("--trials must be at least 1");
  const Scenario s = load_scenario(scenario_path);
  const Strategy st = strategy_from_spec(strategy_spec);
  const SimContext ctx = make_context(s, st);

  std::vector<std::pair<long, double>> rows;
  TrajectoryObserver csv_observer;
  if (!csv_path.empty()) {
    rows.reserve(static_cast<std::size_t>(trials));
    csv_observer = [&rows](const Trajectory& traj, long k) {
      rows.emplace_back(k, traj.cost);
    };
  }

  const CostReport rep =
      decompose ? evaluate_decomposed(ctx, trials, seed, parallel,
                                      csv_observer)
                : evaluate(ctx, trials, seed, parallel, csv_observer);

  if (!csv_path.empty()) {
    std::sort(rows.begin(), rows.end());
    std::ofstream csv(csv_path);
    if (!csv) throw usage_error("cannot open CSV file: " + csv_path);
    csv << "trial,cost\n";
    csv.precision(17);
    for (const auto& [k, c] : rows) csv << k << ',' << c << '\n';
  }
  if (!split_csv_path.empty()) {
    const Trajectory traj = rollout(ctx, seed, 0);
    const SplitTrajectory sp = propagate_splits(s, traj, traj.ucom, traj.uloc);
    std::ofstream out(split_csv_path);
    if (!out) throw usage_error("cannot open CSV file: " + split_csv_path);
    write_split_csv(out, s, sp);
  }

  json j = rep.to_json();
  j["strategy"] = strategy_spec;
  j["seed"] = seed;
  j["parallel"] = parallel;
  emit(j, out_path);
  return 0;
}

int cmd_verify(const std::string& scenario_path, const std::string& suite,
               const std::string& strategy_spec, long trials,
               std::uint64_t seed) {
  static const std::vector<std::string> kSuites = {
      "splitting", "cost", "decomposition", "projection", "independence",
      "all"};
  if (std::find(kSuites.begin(), kSuites.end(), suite) == kSuites.end()) {
    throw usage_error("unknown suite '" + suite +
                      "' (expected splitting | cost | decomposition | "
                      "projection | independence | all)");
  }
  if (trials < 1) throw usage_error("--trials must be at least 1");
  const Scenario s = load_scenario(scenario_path);
  const Strategy sel = strategy_from_spec(strategy_spec);
  const SimContext ctx_sel = make_context(s, sel);
  const EstimateMode sel_mode =
      context_needs_llms(sel, false) ? EstimateMode::LinearProjection
                                     : EstimateMode::ConditionalMean;

  CheckReport rep;
  const bool all = suite == "all";
  if (all || suite == "cost") {
    rep.append(check_cost_split(ctx_sel, trials, seed));
  }
  if (all || suite == "splitting") {
    rep.append(check_property_suite(ctx_sel, trials, seed, sel_mode));
  }
  if (all || suite == "decomposition") {
    const SimContext ctx_opt =
        make_context(s, Strategy{StrategyKind::Optimal});
    const SimContext ctx_bl =
        make_context(s, Strategy{StrategyKind::BestLinear});
    rep.append(check_total_decomposition(ctx_opt, ctx_bl, trials, seed));
  }
  if (all || suite == "projection") {
    const SimContext ctx_opt =
        make_context(s, Strategy{StrategyKind::Optimal});
    const SimContext ctx_bl =
        make_context(s, Strategy{StrategyKind::BestLinear});
    rep.append(check_projection_split(ctx_opt, trials, seed,
                                      EstimateMode::ConditionalMean));
    rep.append(check_projection_split(ctx_bl, trials, seed,
                                      EstimateMode::LinearProjection));
  }
  if (suite == "independence" ||
      (all && s.topology.n >= 2)) {
    rep.append(check_conditional_independence(ctx_sel, trials, seed));
  }
  if (all) {
    try {
      rep.append(oracle_exact_checks(s));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Validation) throw;
      std::cerr << "exact enumeration skipped: " << e.what() << '\n';
    }
  }

  json j = rep.to_json();
  j["suite"] = suite;
  j["trials"] = trials;
  j["seed"] = seed;
  std::cout << j.dump(2) << '\n';
  return rep.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Decentralized linear-quadratic control with one major and many minor "
      "agents: schedules, simulation, verification."};
  app.require_subcommand(1);

  std::string sc_path, out_path, csv_path, split_csv_path;
  std::string strategy_spec = "optimal";
  std::string suite = "all";
  long trials = 10000;
  std::uint64_t seed = 1;
  bool decompose = false, parallel = false;

  CLI::App* solve = app.add_subcommand(
      "solve", "Compute control gains and filter schedules, emit JSON");
  solve->add_option("scenario", sc_path, "scenario JSON file")->required();
  solve->add_option("-o,--out", out_path, "output path (default stdout)");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Monte Carlo cost estimate under a chosen strategy");
  simulate->add_option("scenario", sc_path, "scenario JSON file")->required();
  simulate->add_option(
      "--strategy", strategy_spec,
      "optimal | best-linear | state-feedback | custom:<gains.json>");
  simulate->add_option("--trials", trials, "number of Monte Carlo trials");
  simulate->add_option("--seed", seed, "random seed");
  simulate->add_flag("--decompose", decompose,
                     "report the common/local/noise cost decomposition");
  simulate->add_flag("--parallel", parallel, "run trials concurrently");
  simulate->add_option("--csv", csv_path, "write per-trial costs as CSV");
  simulate->add_option("--split-csv", split_csv_path,
                       "write the first trial's state/control split as CSV");
  simulate->add_option("-o,--out", out_path, "report path (default stdout)");

  CLI::App* verify = app.add_subcommand(
      "verify", "Run a verification suite, exit nonzero on failure");
  verify->add_option("scenario", sc_path, "scenario JSON file")->required();
  verify->add_option("--suite", suite,
                     "splitting | cost | decomposition | projection | "
                     "independence | all");
  verify->add_option("--strategy", strategy_spec,
                     "strategy for the cost/splitting/independence suites");
  verify->add_option("--trials", trials, "number of Monte Carlo trials");
  verify->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (solve->parsed()) return cmd_solve(sc_path, out_path);
    if (simulate->parsed()) {
      return cmd_simulate(sc_path, strategy_spec, trials, seed, decompose,
                          parallel, out_path, csv_path, split_csv_path);
    }
    return cmd_verify(sc_path, suite, strategy_spec, trials, seed);
  } catch (const mmlq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "scenario schema error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 4;
  }
}
