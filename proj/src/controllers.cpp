#include "mmlq/controllers.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "mmlq/errors.hpp"

namespace mmlq {

namespace {

// A gain entry is either one matrix (nested arrays of numbers) or an array of
// matrices applied per time step.
GainSeq gain_seq_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) {
    throw validation_error(field + ": expected a matrix or list of matrices");
  }
  GainSeq seq;
  const bool per_step = j[0].is_array() && !j[0].empty() && j[0][0].is_array();
  if (per_step) {
    for (std::size_t k = 0; k < j.size(); ++k) {
      seq.M.push_back(mat_from_json(j[k], field + "[" + std::to_string(k) + "]"));
    }
  } else {
    seq.M.push_back(mat_from_json(j, field));
  }
  return seq;
}

AffSeq aff_seq_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) {
    throw validation_error(field + ": expected a vector or list of vectors");
  }
  AffSeq seq;
  if (j[0].is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) {
      seq.v.push_back(vec_from_json(j[k], field + "[" + std::to_string(k) + "]"));
    }
  } else {
    seq.v.push_back(vec_from_json(j, field));
  }
  return seq;
}

void check_gain_dims(const GainSeq& g, Eigen::Index rows, Eigen::Index cols,
                     const std::string& field) {
  for (const Mat& m : g.M) {
    if (m.rows() != rows || m.cols() != cols) {
      throw validation_error(field + ": expected " + std::to_string(rows) +
                             "x" + std::to_string(cols) + ", got " +
                             std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()));
    }
  }
}

void check_aff_dims(const AffSeq& g, Eigen::Index rows,
                    const std::string& field) {
  for (const Vec& v : g.v) {
    if (v.size() != rows) {
      throw validation_error(field + ": expected length " +
                             std::to_string(rows) + ", got " +
                             std::to_string(v.size()));
    }
  }
}

}  // namespace

CustomGains custom_gains_from_json(const json& j) {
  check_keys(j, {"window", "major", "minors"}, "custom gains");
  CustomGains cg;
  if (j.contains("window")) {
    if (!j["window"].is_number_integer() || j["window"].get<int>() < 1) {
      throw validation_error("custom gains: window must be a positive integer");
    }
    cg.window = j["window"].get<int>();
  }
  if (!j.contains("major") || !j.contains("minors")) {
    throw validation_error("custom gains: major and minors are required");
  }
  const json& mj = j["major"];
  check_keys(mj, {"Gw", "Gc", "g"}, "custom gains major");
  cg.Gw0 = gain_seq_from_json(mj.at("Gw"), "major.Gw");
  cg.Gc0 = gain_seq_from_json(mj.at("Gc"), "major.Gc");
  if (mj.contains("g")) cg.g0 = aff_seq_from_json(mj["g"], "major.g");
  if (!j["minors"].is_array()) {
    throw validation_error("custom gains: minors must be an array");
  }
  for (std::size_t k = 0; k < j["minors"].size(); ++k) {
    const json& nj = j["minors"][k];
    const std::string tag = "minors[" + std::to_string(k) + "]";
    check_keys(nj, {"Gw", "Gc", "Gl", "g"}, "custom gains " + tag);
    CustomMinorGains mg;
    mg.Gw = gain_seq_from_json(nj.at("Gw"), tag + ".Gw");
    mg.Gc = gain_seq_from_json(nj.at("Gc"), tag + ".Gc");
    mg.Gl = gain_seq_from_json(nj.at("Gl"), tag + ".Gl");
    if (nj.contains("g")) mg.g = aff_seq_from_json(nj["g"], tag + ".g");
    cg.minors.push_back(std::move(mg));
  }
  return cg;
}

CustomGains load_custom_gains(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open gain file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw usage_error("gain file " + path + ": " + e.what());
  }
  return custom_gains_from_json(j);
}

void validate_custom_gains(const Scenario& s, const CustomGains& cg) {
  const AgentTopology& topo = s.topology;
  if (static_cast<int>(cg.minors.size()) != topo.n) {
    throw validation_error("custom gains: expected " + std::to_string(topo.n) +
                           " minor gain sets, got " +
                           std::to_string(cg.minors.size()));
  }
  const Eigen::Index wdim = static_cast<Eigen::Index>(cg.window) * topo.dx[0];
  const Eigen::Index dxt = topo.dx_total();
  check_gain_dims(cg.Gw0, topo.du[0], wdim, "major.Gw");
  check_gain_dims(cg.Gc0, topo.du[0], dxt, "major.Gc");
  if (!cg.g0.v.empty()) check_aff_dims(cg.g0, topo.du[0], "major.g");
  for (int i = 1; i <= topo.n; ++i) {
    const CustomMinorGains& mg = cg.minors[i - 1];
    const std::string tag = "minors[" + std::to_string(i - 1) + "]";
    check_gain_dims(mg.Gw, topo.du[i], wdim, tag + ".Gw");
    check_gain_dims(mg.Gc, topo.du[i], dxt, tag + ".Gc");
    check_gain_dims(mg.Gl, topo.du[i], topo.dx[i], tag + ".Gl");
    if (!mg.g.v.empty()) check_aff_dims(mg.g, topo.du[i], tag + ".g");
  }
}

Strategy strategy_from_spec(const std::string& spec) {
  Strategy st;
  if (spec == "optimal") {
    st.kind = StrategyKind::Optimal;
  } else if (spec == "best-linear") {
    st.kind = StrategyKind::BestLinear;
  } else if (spec == "state-feedback") {
    st.kind = StrategyKind::StateFeedback;
  } else if (spec.rfind("custom:", 0) == 0) {
    st.kind = StrategyKind::CustomLinear;
    st.custom = load_custom_gains(spec.substr(7));
  } else {
    throw usage_error(
        "unknown strategy '" + spec +
        "' (expected optimal | best-linear | state-feedback | custom:<path>)");
  }
  return st;
}

// ---------------------------------------------------------------------------

Vec act_major(const Scenario& s, const GainSchedule& g, int t,
              const Vec& xhat_c) {
  return -(g.Lcom_row(s, t, 0) * xhat_c);
}

Vec ucom_minor(const Scenario& s, const GainSchedule& g, int t, int i,
               const Vec& xhat_c) {
  return -(g.Lcom_row(s, t, i) * xhat_c);
}

Vec act_minor_optimal(const Scenario& s, const GainSchedule& g, int t, int i,
                      const Vec& xhat_c, const Vec& xhat_i) {
  const Vec common_block =
      xhat_c.segment(s.topology.x_offset(i), s.topology.dx[i]);
  return ucom_minor(s, g, t, i, xhat_c) -
         g.Lloc[i - 1][t] * (xhat_i - common_block);
}

Vec act_minor_linear(const Scenario& s, const GainSchedule& g, int t, int i,
                     const Vec& xhat_c, const Vec& xhat_i) {
  return act_minor_optimal(s, g, t, i, xhat_c, xhat_i);
}

Vec act_minor_state_feedback(const Scenario& s, const GainSchedule& g, int t,
                             int i, const Vec& xhat_c, const Vec& x_i) {
  return act_minor_optimal(s, g, t, i, xhat_c, x_i);
}

void require_state_feedback(const Scenario& s) {
  for (int i = 1; i <= s.topology.n; ++i) {
    const Mat& C = s.sys.Cii[i - 1];
    const bool identity =
        C.rows() == C.cols() &&
        (C - Mat::Identity(C.rows(), C.cols())).lpNorm<Eigen::Infinity>() <=
            1e-12;
    if (!identity || !s.noise.v[i - 1].is_zero()) {
      throw validation_error(
          "state-feedback strategy requires perfect observations (C_ii = I, "
          "v_i = 0); minor agent " +
          std::to_string(i) + " does not qualify");
    }
  }
}

// ---------------------------------------------------------------------------

Vec custom_window(const Scenario& s, const std::vector<Vec>& x0_hist, int t,
                  int window) {
  const int dx0 = s.topology.dx[0];
  Vec win = Vec::Zero(static_cast<Eigen::Index>(window) * dx0);
  for (int k = 0; k < window; ++k) {
    const int tau = t - k;
    if (tau >= 1) win.segment(static_cast<Eigen::Index>(k) * dx0, dx0) = x0_hist[tau];
  }
  return win;
}

Vec act_custom_major(const CustomGains& cg, int t, const Vec& win,
                     const Vec& xhat_c) {
  Vec u = cg.Gw0.at(t) * win + cg.Gc0.at(t) * xhat_c;
  if (!cg.g0.v.empty()) u += cg.g0.at(t);
  return u;
}

Vec act_custom_minor(const CustomGains& cg, int t, int i, const Vec& win,
                     const Vec& xhat_c, const Vec& xhat_i) {
  const CustomMinorGains& mg = cg.minors[i - 1];
  Vec u = mg.Gw.at(t) * win + mg.Gc.at(t) * xhat_c + mg.Gl.at(t) * xhat_i;
  if (!mg.g.v.empty()) u += mg.g.at(t);
  return u;
}

Vec ucom_custom_minor(const Scenario& s, const CustomGains& cg, int t, int i,
                      const Vec& win, const Vec& xhat_c) {
  const Vec common_block =
      xhat_c.segment(s.topology.x_offset(i), s.topology.dx[i]);
  return act_custom_minor(cg, t, i, win, xhat_c, common_block);
}

}  // namespace mmlq
