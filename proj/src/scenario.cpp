#include "mmlq/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mmlq/tolerances.hpp"

namespace mmlq {

// ---------------------------------------------------------------- linalg ---

double min_eigenvalue_sym(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double asymmetry(const Mat& m) {
  double denom = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() / denom;
}

Mat solve_spd(const Mat& a, const Mat& b, const std::string& what) {
  Eigen::LDLT<Mat> ldlt(sym(a));
  if (ldlt.info() != Eigen::Success)
    throw numerical_error(what + ": LDLT factorization failed");
  Mat x = ldlt.solve(b);
  if (!x.allFinite())
    throw numerical_error(what + ": singular system (non-finite solution)");
  return x;
}

Mat mat_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw validation_error(field + ": expected a nested array (matrix)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw validation_error(field + ": ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& cell = row.at(static_cast<size_t>(c));
      if (!cell.is_number())
        throw validation_error(field + ": non-numeric entry");
      m(r, c) = cell.get<double>();
    }
  }
  return m;
}

Mat mat_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                  const std::string& field) {
  Mat m = mat_from_json(j, field);
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << field << ": expected " << rows << "x" << cols << ", got "
       << m.rows() << "x" << m.cols();
    throw validation_error(os.str());
  }
  return m;
}

Vec vec_from_json(const json& j, const std::string& field) {
  if (!j.is_array())
    throw validation_error(field + ": expected an array (vector)");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto& cell = j.at(static_cast<size_t>(i));
    if (!cell.is_number())
      throw validation_error(field + ": non-numeric entry");
    v[i] = cell.get<double>();
  }
  return v;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!j.is_object()) return;
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw validation_error(context + ": unknown key '" + item.key() + "'");
  }
}

// -------------------------------------------------------------- topology ---

int AgentTopology::dx_total() const {
  int s = 0;
  for (int d : dx) s += d;
  return s;
}

int AgentTopology::du_total() const {
  int s = 0;
  for (int d : du) s += d;
  return s;
}

int AgentTopology::x_offset(int i) const {
  int off = 0;
  for (int k = 0; k < i; ++k) off += dx[static_cast<size_t>(k)];
  return off;
}

int AgentTopology::u_offset(int i) const {
  int off = 0;
  for (int k = 0; k < i; ++k) off += du[static_cast<size_t>(k)];
  return off;
}

Mat Scenario::Qii(int i) const {
  int off = topology.x_offset(i), d = topology.dx[static_cast<size_t>(i)];
  return cost.Q.block(off, off, d, d);
}

Mat Scenario::Rii(int i) const {
  int off = topology.u_offset(i), d = topology.du[static_cast<size_t>(i)];
  return cost.R.block(off, off, d, d);
}

Mat Scenario::QTii(int i) const {
  int off = topology.x_offset(i), d = topology.dx[static_cast<size_t>(i)];
  return cost.QT.block(off, off, d, d);
}

std::string ValidationReport::str() const {
  std::ostringstream os;
  for (const auto& v : violations) os << v.field << ": " << v.message << "\n";
  return os.str();
}

// -------------------------------------------------------------- assembly ---

std::pair<Mat, Mat> assemble_global(const Scenario& s) {
  const auto& topo = s.topology;
  const int nx = topo.dx_total(), nu = topo.du_total();
  Mat A = Mat::Zero(nx, nx), B = Mat::Zero(nx, nu);
  A.block(0, 0, topo.dx[0], topo.dx[0]) = s.sys.A00;
  B.block(0, 0, topo.dx[0], topo.du[0]) = s.sys.B00;
  for (int i = 1; i <= topo.n; ++i) {
    const auto k = static_cast<size_t>(i - 1);
    int xo = topo.x_offset(i), uo = topo.u_offset(i);
    int dxi = topo.dx[static_cast<size_t>(i)];
    int dui = topo.du[static_cast<size_t>(i)];
    A.block(xo, 0, dxi, topo.dx[0]) = s.sys.Ai0[k];
    A.block(xo, xo, dxi, dxi) = s.sys.Aii[k];
    B.block(xo, 0, dxi, topo.du[0]) = s.sys.Bi0[k];
    B.block(xo, uo, dxi, dui) = s.sys.Bii[k];
  }
  return {A, B};
}

void check_global_sparsity(const Mat& A, const Mat& B,
                           const AgentTopology& topo,
                           std::vector<Violation>& out) {
  auto zero_block = [](const Mat& m, int r, int c, int h, int w) {
    return m.block(r, c, h, w).cwiseAbs().maxCoeff() == 0.0;
  };
  for (int i = 0; i <= topo.n; ++i) {
    for (int j = 1; j <= topo.n; ++j) {
      if (i == j) continue;
      if (i >= 1 && j >= 1) {
        if (!zero_block(A, topo.x_offset(i), topo.x_offset(j),
                        topo.dx[static_cast<size_t>(i)],
                        topo.dx[static_cast<size_t>(j)]))
          out.push_back({"matrices.A",
                         "minor-minor coupling forbidden (block " +
                             std::to_string(i) + "," + std::to_string(j) +
                             ")"});
        if (!zero_block(B, topo.x_offset(i), topo.u_offset(j),
                        topo.dx[static_cast<size_t>(i)],
                        topo.du[static_cast<size_t>(j)]))
          out.push_back({"matrices.B",
                         "minor-minor coupling forbidden (block " +
                             std::to_string(i) + "," + std::to_string(j) +
                             ")"});
      } else if (i == 0) {
        if (!zero_block(A, 0, topo.x_offset(j), topo.dx[0],
                        topo.dx[static_cast<size_t>(j)]))
          out.push_back({"matrices.A",
                         "minor-to-major coupling forbidden (block 0," +
                             std::to_string(j) + ")"});
        if (!zero_block(B, 0, topo.u_offset(j), topo.dx[0],
                        topo.du[static_cast<size_t>(j)]))
          out.push_back({"matrices.B",
                         "minor-to-major coupling forbidden (block 0," +
                             std::to_string(j) + ")"});
      }
    }
  }
}

// ------------------------------------------------------------ validation ---

namespace {

void check_dist(const NoiseDist& d, int want_dim, const std::string& field,
                std::vector<Violation>& out) {
  if (d.dim != want_dim) {
    out.push_back({field, "dimension " + std::to_string(d.dim) +
                              " does not match agent dimension " +
                              std::to_string(want_dim)});
    return;
  }
  if (d.family == NoiseFamily::PointMass) {
    if (d.atoms.empty() || d.atoms.size() != d.probs.size()) {
      out.push_back({field, "atoms/probs size mismatch"});
      return;
    }
    double total = 0.0;
    for (double p : d.probs) {
      if (p < 0) out.push_back({field, "negative probability"});
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
      out.push_back({field, "probabilities do not sum to 1"});
  }
  if (d.family == NoiseFamily::GaussianMixture) {
    double total = 0.0;
    for (const auto& c : d.components) {
      if (c.weight < 0) out.push_back({field, "negative mixture weight"});
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12)
      out.push_back({field, "mixture weights do not sum to 1"});
  }
  double scale = std::max(1.0, d.variance().cwiseAbs().maxCoeff());
  if (d.mean().cwiseAbs().maxCoeff() > 1e-12 * scale)
    out.push_back({field, "distribution mean is not zero"});
  if (!d.variance().allFinite())
    out.push_back({field, "variance is not finite"});
}

void check_shape(const Mat& m, Eigen::Index r, Eigen::Index c,
                 const std::string& field, std::vector<Violation>& out) {
  if (m.rows() != r || m.cols() != c) {
    std::ostringstream os;
    os << "expected " << r << "x" << c << ", got " << m.rows() << "x"
       << m.cols();
    out.push_back({field, os.str()});
  }
}

// Symmetric PSD/PD check with relative tolerances.
void check_cost_matrix(const Mat& m, const std::string& field, bool pd,
                       std::vector<Violation>& out) {
  if (m.rows() != m.cols()) {
    out.push_back({field, "not square"});
    return;
  }
  if (asymmetry(m) > tol::kSymRel) {
    out.push_back({field, "not symmetric"});
    return;
  }
  double nrm = std::max(1.0, m.norm());
  double mineig = min_eigenvalue_sym(m);
  if (pd) {
    if (mineig < tol::kPdRel * nrm)
      out.push_back({field, "not positive definite"});
  } else if (mineig < -tol::kPsdRel * nrm) {
    out.push_back({field, "not positive semi-definite"});
  }
}

}  // namespace

ValidationReport validate_scenario(const Scenario& s) {
  ValidationReport rep;
  auto& out = rep.violations;
  const auto& topo = s.topology;

  if (topo.n < 1) out.push_back({"topology.n", "need at least one minor agent"});
  if (static_cast<int>(topo.dx.size()) != topo.n + 1)
    out.push_back({"topology.dx", "need n+1 entries"});
  if (static_cast<int>(topo.du.size()) != topo.n + 1)
    out.push_back({"topology.du", "need n+1 entries"});
  if (static_cast<int>(topo.dy.size()) != topo.n)
    out.push_back({"topology.dy", "need exactly n entries (minor agents only)"});
  for (int d : topo.dx)
    if (d < 1) out.push_back({"topology.dx", "dimensions must be >= 1"});
  for (int d : topo.du)
    if (d < 1) out.push_back({"topology.du", "dimensions must be >= 1"});
  for (int d : topo.dy)
    if (d < 1) out.push_back({"topology.dy", "dimensions must be >= 1"});
  if (!out.empty()) return rep;  // shapes below depend on a sane topology

  check_shape(s.sys.A00, topo.dx[0], topo.dx[0], "matrices.A00", out);
  check_shape(s.sys.B00, topo.dx[0], topo.du[0], "matrices.B00", out);
  auto want = static_cast<size_t>(topo.n);
  if (s.sys.Ai0.size() != want || s.sys.Aii.size() != want ||
      s.sys.Bi0.size() != want || s.sys.Bii.size() != want ||
      s.sys.Cii.size() != want) {
    out.push_back({"matrices", "need one block set per minor agent"});
    return rep;
  }
  for (int i = 1; i <= topo.n; ++i) {
    const auto k = static_cast<size_t>(i - 1);
    const auto si = static_cast<size_t>(i);
    std::string pre = "matrices.minors[" + std::to_string(i - 1) + "].";
    check_shape(s.sys.Ai0[k], topo.dx[si], topo.dx[0], pre + "Ai0", out);
    check_shape(s.sys.Aii[k], topo.dx[si], topo.dx[si], pre + "Aii", out);
    check_shape(s.sys.Bi0[k], topo.dx[si], topo.du[0], pre + "Bi0", out);
    check_shape(s.sys.Bii[k], topo.dx[si], topo.du[si], pre + "Bii", out);
    check_shape(s.sys.Cii[k], topo.dy[k], topo.dx[si], pre + "Cii", out);
  }
  if (!out.empty()) return rep;

  const int nx = topo.dx_total(), nu = topo.du_total();
  check_shape(s.cost.Q, nx, nx, "cost.Q", out);
  check_shape(s.cost.R, nu, nu, "cost.R", out);
  check_shape(s.cost.QT, nx, nx, "cost.QT", out);
  if (out.empty()) {
    check_cost_matrix(s.cost.Q, "cost.Q", false, out);
    check_cost_matrix(s.cost.QT, "cost.QT", false, out);
    check_cost_matrix(s.cost.R, "cost.R", true, out);
  }

  if (s.noise.x1.size() != static_cast<size_t>(topo.n + 1))
    out.push_back({"noise.x1", "need n+1 distributions"});
  if (s.noise.w.size() != static_cast<size_t>(topo.n + 1))
    out.push_back({"noise.w", "need n+1 distributions"});
  if (s.noise.v.size() != static_cast<size_t>(topo.n))
    out.push_back({"noise.v", "need n distributions (minor agents only)"});
  if (out.empty()) {
    for (int i = 0; i <= topo.n; ++i) {
      const auto si = static_cast<size_t>(i);
      check_dist(s.noise.x1[si], topo.dx[si],
                 "noise.x1[" + std::to_string(i) + "]", out);
      check_dist(s.noise.w[si], topo.dx[si],
                 "noise.w[" + std::to_string(i) + "]", out);
    }
    for (int i = 1; i <= topo.n; ++i)
      check_dist(s.noise.v[static_cast<size_t>(i - 1)],
                 topo.dy[static_cast<size_t>(i - 1)],
                 "noise.v[" + std::to_string(i - 1) + "]", out);
  }

  if (s.T < 2) out.push_back({"horizon", "horizon must be >= 2"});

  if (out.empty()) {
    auto [A, B] = assemble_global(s);
    check_global_sparsity(A, B, topo, out);
  }
  return rep;
}

// ------------------------------------------------------------------ JSON ---

namespace {

AgentTopology topology_from_json(const json& j) {
  check_keys(j, {"n", "dx", "du", "dy"}, "topology");
  AgentTopology t;
  if (!j.contains("n") || !j.contains("dx") || !j.contains("du") ||
      !j.contains("dy"))
    throw validation_error("topology: need n, dx, du, dy");
  t.n = j.at("n").get<int>();
  t.dx = j.at("dx").get<std::vector<int>>();
  t.du = j.at("du").get<std::vector<int>>();
  t.dy = j.at("dy").get<std::vector<int>>();
  return t;
}

SystemMatrices matrices_from_json(const json& j, const AgentTopology& topo) {
  SystemMatrices m;
  if (j.contains("A") || j.contains("B")) {
    // Dense stacked form: validated for block sparsity, then sliced.
    check_keys(j, {"A", "B", "Cii"}, "matrices");
    if (!j.contains("A") || !j.contains("B") || !j.contains("Cii"))
      throw validation_error("matrices: dense form needs A, B, Cii");
    const int nx = topo.dx_total(), nu = topo.du_total();
    Mat A = mat_from_json(j.at("A"), nx, nx, "matrices.A");
    Mat B = mat_from_json(j.at("B"), nx, nu, "matrices.B");
    std::vector<Violation> sparsity;
    check_global_sparsity(A, B, topo, sparsity);
    if (!sparsity.empty())
      throw validation_error(sparsity.front().field + ": " +
                             sparsity.front().message);
    m.A00 = A.block(0, 0, topo.dx[0], topo.dx[0]);
    m.B00 = B.block(0, 0, topo.dx[0], topo.du[0]);
    const auto& cii = j.at("Cii");
    if (!cii.is_array() || static_cast<int>(cii.size()) != topo.n)
      throw validation_error("matrices.Cii: need one block per minor agent");
    for (int i = 1; i <= topo.n; ++i) {
      const auto si = static_cast<size_t>(i);
      int xo = topo.x_offset(i), uo = topo.u_offset(i);
      m.Ai0.push_back(A.block(xo, 0, topo.dx[si], topo.dx[0]));
      m.Aii.push_back(A.block(xo, xo, topo.dx[si], topo.dx[si]));
      m.Bi0.push_back(B.block(xo, 0, topo.dx[si], topo.du[0]));
      m.Bii.push_back(B.block(xo, uo, topo.dx[si], topo.du[si]));
      m.Cii.push_back(mat_from_json(cii.at(static_cast<size_t>(i - 1)),
                                    "matrices.Cii[" + std::to_string(i - 1) +
                                        "]"));
    }
    return m;
  }
  check_keys(j, {"A00", "B00", "minors"}, "matrices");
  if (!j.contains("A00") || !j.contains("B00") || !j.contains("minors"))
    throw validation_error("matrices: need A00, B00, minors");
  m.A00 = mat_from_json(j.at("A00"), "matrices.A00");
  m.B00 = mat_from_json(j.at("B00"), "matrices.B00");
  for (size_t k = 0; k < j.at("minors").size(); ++k) {
    const auto& blk = j.at("minors").at(k);
    std::string pre = "matrices.minors[" + std::to_string(k) + "]";
    check_keys(blk, {"Ai0", "Aii", "Bi0", "Bii", "Cii"}, pre);
    for (const char* key : {"Ai0", "Aii", "Bi0", "Bii", "Cii"})
      if (!blk.contains(key))
        throw validation_error(pre + ": missing " + key);
    m.Ai0.push_back(mat_from_json(blk.at("Ai0"), pre + ".Ai0"));
    m.Aii.push_back(mat_from_json(blk.at("Aii"), pre + ".Aii"));
    m.Bi0.push_back(mat_from_json(blk.at("Bi0"), pre + ".Bi0"));
    m.Bii.push_back(mat_from_json(blk.at("Bii"), pre + ".Bii"));
    m.Cii.push_back(mat_from_json(blk.at("Cii"), pre + ".Cii"));
  }
  return m;
}

}  // namespace

Scenario scenario_from_json(const json& j) {
  check_keys(j, {"topology", "matrices", "cost", "noise", "horizon", "seed"},
             "scenario");
  for (const char* key : {"topology", "matrices", "cost", "noise", "horizon"})
    if (!j.contains(key))
      throw validation_error(std::string("scenario: missing '") + key + "'");

  Scenario s;
  s.topology = topology_from_json(j.at("topology"));
  s.sys = matrices_from_json(j.at("matrices"), s.topology);

  const auto& cost = j.at("cost");
  check_keys(cost, {"Q", "R", "QT"}, "cost");
  for (const char* key : {"Q", "R", "QT"})
    if (!cost.contains(key))
      throw validation_error(std::string("cost: missing '") + key + "'");
  s.cost.Q = mat_from_json(cost.at("Q"), "cost.Q");
  s.cost.R = mat_from_json(cost.at("R"), "cost.R");
  s.cost.QT = mat_from_json(cost.at("QT"), "cost.QT");

  const auto& noise = j.at("noise");
  check_keys(noise, {"x1", "w", "v"}, "noise");
  for (const char* key : {"x1", "w", "v"})
    if (!noise.contains(key))
      throw validation_error(std::string("noise: missing '") + key + "'");
  for (size_t i = 0; i < noise.at("x1").size(); ++i)
    s.noise.x1.push_back(noise_from_json(noise.at("x1").at(i),
                                         "noise.x1[" + std::to_string(i) +
                                             "]"));
  for (size_t i = 0; i < noise.at("w").size(); ++i)
    s.noise.w.push_back(
        noise_from_json(noise.at("w").at(i), "noise.w[" + std::to_string(i) +
                                                 "]"));
  for (size_t i = 0; i < noise.at("v").size(); ++i)
    s.noise.v.push_back(
        noise_from_json(noise.at("v").at(i), "noise.v[" + std::to_string(i) +
                                                 "]"));

  s.T = j.at("horizon").get<int>();
  s.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 0;
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open scenario file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw usage_error("scenario parse error in " + path + ": " + e.what());
  }
  Scenario s = scenario_from_json(j);
  ValidationReport rep = validate_scenario(s);
  if (!rep.pass())
    throw validation_error("invalid scenario " + path + ":\n" + rep.str());
  return s;
}

}  // namespace mmlq
