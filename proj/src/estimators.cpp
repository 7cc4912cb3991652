#include "mmlq/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/LU>

#include "mmlq/errors.hpp"
#include "mmlq/tolerances.hpp"

namespace mmlq {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

std::string agent_tag(int i) { return "minor agent " + std::to_string(i); }

// Index of the grid node nearest to x (nodes are equally spaced).
int nearest_node(const Vec& nodes, double x) {
  const int g = static_cast<int>(nodes.size());
  const double h = nodes(1) - nodes(0);
  int j = static_cast<int>(std::lround((x - nodes(0)) / h));
  return std::clamp(j, 0, g - 1);
}

// Probability that a finite-support distribution produces residual `resid`
// (match within a relative tolerance; supports in scenarios are exact binary
// values, so matches are bitwise in practice).
double discrete_likelihood(const NoiseDist& v, const Vec& resid) {
  double lik = 0;
  for (std::size_t k = 0; k < v.atoms.size(); ++k) {
    const double tol = 1e-9 * std::max(1.0, v.atoms[k].norm());
    if ((resid - v.atoms[k]).norm() <= tol) lik += v.probs[k];
  }
  return lik;
}

}  // namespace

// ---------------------------------------------------------------------------
// CommonFilter
// ---------------------------------------------------------------------------

CommonFilter::CommonFilter(const Scenario& s) : s_(&s) {
  xhat_ = Vec::Zero(s.topology.dx_total());
}

void CommonFilter::init(const Vec& x0_first) {
  xhat_.setZero();
  xhat_.head(s_->topology.dx[0]) = x0_first;
}

void CommonFilter::step(const Vec& x0_next, const Vec& x0_now, const Vec& u0,
                        const std::vector<Vec>& ucom_minors) {
  const AgentTopology& topo = s_->topology;
  Vec next = Vec::Zero(xhat_.size());
  next.head(topo.dx[0]) = x0_next;
  for (int i = 1; i <= topo.n; ++i) {
    const int off = topo.x_offset(i);
    next.segment(off, topo.dx[i]) =
        s_->sys.Ai0[i - 1] * x0_now +
        s_->sys.Aii[i - 1] * xhat_.segment(off, topo.dx[i]) +
        s_->sys.Bi0[i - 1] * u0 + s_->sys.Bii[i - 1] * ucom_minors[i - 1];
  }
  xhat_ = next;
}

Vec CommonFilter::minor_block(int i) const {
  return xhat_.segment(s_->topology.x_offset(i), s_->topology.dx[i]);
}

// ---------------------------------------------------------------------------
// FilterPlan construction
// ---------------------------------------------------------------------------

namespace {

void build_grid(const Scenario& s, int i, FilterPlan& p) {
  const double a = p.A(0, 0);
  // Span the grid over the widest control-free state distribution on the
  // horizon.
  double var = p.prior.variance()(0, 0);
  double vmax = var;
  const double vw = p.w.variance()(0, 0);
  for (int t = 2; t <= s.T; ++t) {
    var = a * a * var + vw;
    vmax = std::max(vmax, var);
  }
  const double sigma = std::max(std::sqrt(vmax), 1e-6);
  const int g = tol::kGridNodes;
  const double span = tol::kGridSpanSigmas * sigma;
  const double h = 2 * span / (g - 1);

  p.nodes = Vec::LinSpaced(g, -span, span);
  p.trapw = Vec::Constant(g, h);
  p.trapw(0) = h / 2;
  p.trapw(g - 1) = h / 2;

  // Initial density at the nodes.
  p.init_f = Vec::Zero(g);
  if (p.prior.is_continuous()) {
    for (int j = 0; j < g; ++j) p.init_f(j) = p.prior.pdf1(p.nodes(j));
  } else {
    for (std::size_t m = 0; m < p.prior.atoms.size(); ++m) {
      const int j = nearest_node(p.nodes, p.prior.atoms[m](0));
      p.init_f(j) += p.prior.probs[m] / p.trapw(j);
    }
  }
  const double z = p.trapw.dot(p.init_f);
  if (!(z > 0)) {
    throw numerical_error("grid filter: prior mass vanished on the grid for " +
                          agent_tag(i));
  }
  p.init_f /= z;

  // Predict operator mapping node values to node values.
  p.kernel = Mat::Zero(g, g);
  if (p.w.is_continuous()) {
    for (int k = 0; k < g; ++k) {
      const double ax = a * p.nodes(k);
      for (int j = 0; j < g; ++j) {
        p.kernel(j, k) = p.w.pdf1(p.nodes(j) - ax) * p.trapw(k);
      }
    }
  } else {
    // Finite-support process noise: deposit each atom's mass on the nearest
    // node (documented grid approximation for mixed-support scenarios).
    for (int k = 0; k < g; ++k) {
      const double ax = a * p.nodes(k);
      for (std::size_t m = 0; m < p.w.atoms.size(); ++m) {
        const int j = nearest_node(p.nodes, ax + p.w.atoms[m](0));
        p.kernel(j, k) += p.w.probs[m] * p.trapw(k) / p.trapw(j);
      }
    }
  }
}

void build_collapsed(const Scenario& s, int i, FilterPlan& p) {
  (void)s;
  const double a = p.A(0, 0);
  p.w_is_zero = p.w.is_zero();
  if (!p.w_is_zero && !p.w.is_continuous()) {
    throw validation_error(
        "bayes filter: finite-support process noise combined with a "
        "continuous prior and finite-support observation noise is not "
        "supported (" +
        agent_tag(i) + ")");
  }
  if (p.w_is_zero && std::abs(a) < 1e-300 && p.prior.is_continuous()) {
    throw validation_error(
        "bayes filter: zero process noise with a zero transition leaves no "
        "density to collapse (" +
        agent_tag(i) + ")");
  }
  p.gaussian_predict = p.prior.is_gaussian() && (p.w.is_gaussian() || p.w_is_zero);
  if (p.gaussian_predict) {
    const double vw = p.w_is_zero ? 0.0 : p.w.variance()(0, 0);
    p.predict_var1 = a * a * p.prior.variance()(0, 0) + vw;
    if (!(p.predict_var1 > 0)) {
      throw validation_error(
          "bayes filter: degenerate one-step state distribution (" +
          agent_tag(i) + ")");
    }
    return;
  }
  if (p.prior.is_continuous() && !p.w_is_zero) {
    // Quadrature over the prior for the first measurement update.
    const double sx = std::max(std::sqrt(p.prior.variance()(0, 0)), 1e-6);
    const int q = tol::kQuadratureNodes;
    const double span = tol::kGridSpanSigmas * sx;
    const double h = 2 * span / (q - 1);
    p.quad_nodes = Vec::LinSpaced(q, -span, span);
    p.quad_w = Vec::Constant(q, h);
    p.quad_w(0) = h / 2;
    p.quad_w(q - 1) = h / 2;
    for (int j = 0; j < q; ++j) p.quad_w(j) *= p.prior.pdf1(p.quad_nodes(j));
    const double z = p.quad_w.sum();
    if (!(z > 0)) {
      throw numerical_error("bayes filter: prior quadrature mass vanished (" +
                            agent_tag(i) + ")");
    }
    p.quad_w /= z;
  }
}

}  // namespace

FilterPlan make_filter_plan(const Scenario& s, int i, BayesModeOverride ov) {
  FilterPlan p;
  p.agent = i;
  p.dx = s.topology.dx[i];
  p.A = s.sys.Aii[i - 1];
  p.C = s.sys.Cii[i - 1];
  p.prior = s.noise.x1[i];
  p.w = s.noise.w[i];
  p.v = s.noise.v[i - 1];

  if (ov == BayesModeOverride::ForceGrid) {
    if (p.dx != 1) {
      throw validation_error("grid filter requires a scalar minor state (" +
                             agent_tag(i) + ")");
    }
    if (p.v.is_point_mass()) {
      throw validation_error(
          "grid filter requires continuous observation noise (" +
          agent_tag(i) + ")");
    }
    p.mode = BayesMode::Grid;
    build_grid(s, i, p);
    return p;
  }
  if (ov == BayesModeOverride::ForceParticles) {
    if (p.v.is_point_mass()) {
      throw validation_error(
          "particle filter requires continuous observation noise (" +
          agent_tag(i) + ")");
    }
    p.mode = BayesMode::Particles;
    p.n_particles = tol::kParticles;
    return p;
  }

  if (p.prior.is_gaussian() && p.w.is_gaussian() && p.v.is_gaussian()) {
    p.mode = BayesMode::KalmanExact;
    p.kalman = filter_schedule(s, i);
    return p;
  }
  if (p.v.is_zero() && p.C.rows() == p.C.cols()) {
    Eigen::FullPivLU<Mat> lu(p.C);
    if (lu.isInvertible()) {
      p.mode = BayesMode::ExactObservation;
      p.C_inv = lu.inverse();
      return p;
    }
  }
  if (p.dx == 1) {
    if (p.prior.is_point_mass() && p.w.is_point_mass()) {
      p.mode = BayesMode::Atoms;
      for (std::size_t m = 0; m < p.prior.atoms.size(); ++m) {
        p.atom0_x.push_back(p.prior.atoms[m](0));
        p.atom0_w.push_back(p.prior.probs[m]);
      }
      return p;
    }
    if (p.v.is_point_mass()) {
      p.mode = BayesMode::CollapsedAtoms;
      build_collapsed(s, i, p);
      return p;
    }
    p.mode = BayesMode::Grid;
    build_grid(s, i, p);
    return p;
  }
  if (p.v.is_point_mass()) {
    throw validation_error(
        "bayes filter: finite-support observation noise with a multivariate "
        "minor state requires an invertible square observation matrix and "
        "zero noise (" +
        agent_tag(i) + ")");
  }
  p.mode = BayesMode::Particles;
  p.n_particles = tol::kParticles;
  return p;
}

// ---------------------------------------------------------------------------
// BayesFilter
// ---------------------------------------------------------------------------

BayesFilter::BayesFilter(const FilterPlan& plan, std::uint64_t seed,
                         std::uint64_t trial)
    : plan_(&plan), seed_(seed), trial_(trial) {
  switch (plan.mode) {
    case BayesMode::KalmanExact:
    case BayesMode::ExactObservation:
      point_ = Vec::Zero(plan.dx);
      break;
    case BayesMode::Grid:
      grid_f_ = plan.init_f;
      break;
    case BayesMode::Atoms:
      atom_x_ = plan.atom0_x;
      atom_w_ = plan.atom0_w;
      break;
    case BayesMode::CollapsedAtoms:
      prior_phase_ = true;
      break;
    case BayesMode::Particles: {
      const int np = plan.n_particles;
      particles_ = Mat::Zero(plan.dx, np);
      particle_w_ = Vec::Constant(np, 1.0 / np);
      rng::Stream st(seed_, trial_, 3, static_cast<std::uint64_t>(plan.agent),
                     0);
      for (int k = 0; k < np; ++k) {
        particles_.col(k) = plan.prior.sample(st, k);
      }
      break;
    }
  }
}

void BayesFilter::step(int t, const Vec& yw) {
  switch (plan_->mode) {
    case BayesMode::KalmanExact: {
      const Vec pred = plan_->A * point_;
      point_ = pred + plan_->kalman.K[t] * (yw - plan_->C * pred);
      break;
    }
    case BayesMode::ExactObservation:
      point_ = plan_->C_inv * yw;
      break;
    case BayesMode::Grid:
      step_grid(yw);
      break;
    case BayesMode::Atoms:
      step_atoms(yw);
      break;
    case BayesMode::CollapsedAtoms:
      step_collapsed(t, yw);
      break;
    case BayesMode::Particles:
      step_particles(t, yw);
      break;
  }
}

void BayesFilter::step_grid(const Vec& yw) {
  const FilterPlan& p = *plan_;
  Vec f = p.kernel * grid_f_;
  for (int j = 0; j < f.size(); ++j) {
    Vec resid = yw - p.C * p.nodes.segment(j, 1);
    f(j) *= p.v.pdf(resid);
  }
  const double z = p.trapw.dot(f);
  if (!(z > 0) || !std::isfinite(z)) {
    throw numerical_error("grid filter: posterior density vanished (" +
                          agent_tag(p.agent) + ")");
  }
  grid_f_ = f / z;
}

void BayesFilter::step_atoms(const Vec& yw) {
  const FilterPlan& p = *plan_;
  const double a = p.A(0, 0);

  // Predict: propagate every (atom, process-noise atom) pair.
  std::vector<std::pair<double, double>> cand;
  cand.reserve(atom_x_.size() * p.w.atoms.size());
  for (std::size_t j = 0; j < atom_x_.size(); ++j) {
    for (std::size_t m = 0; m < p.w.atoms.size(); ++m) {
      cand.emplace_back(a * atom_x_[j] + p.w.atoms[m](0),
                        atom_w_[j] * p.w.probs[m]);
    }
  }
  std::sort(cand.begin(), cand.end());
  // Merge coincident atoms.
  std::vector<double> xs, ws;
  for (const auto& [x, wgt] : cand) {
    if (!xs.empty() && std::abs(x - xs.back()) <= 1e-12 * std::max(1.0, std::abs(x))) {
      ws.back() += wgt;
    } else {
      xs.push_back(x);
      ws.push_back(wgt);
    }
  }

  // Update with the observation.
  double z = 0;
  for (std::size_t j = 0; j < xs.size(); ++j) {
    Vec resid = yw - p.C * Vec::Constant(1, xs[j]);
    const double lik =
        p.v.is_point_mass() ? discrete_likelihood(p.v, resid) : p.v.pdf(resid);
    ws[j] *= lik;
    z += ws[j];
  }
  if (!(z > 0) || !std::isfinite(z)) {
    throw numerical_error(
        "atom filter: observation has zero probability under the model (" +
        agent_tag(p.agent) + ")");
  }
  for (double& wgt : ws) wgt /= z;

  // Enforce the support budget by dropping the lightest atoms.
  if (static_cast<int>(xs.size()) > tol::kAtomBudget) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
      return ws[l] > ws[r];
    });
    order.resize(tol::kAtomBudget);
    std::sort(order.begin(), order.end());
    std::vector<double> kx, kw;
    double kept = 0;
    for (std::size_t idx : order) {
      kx.push_back(xs[idx]);
      kw.push_back(ws[idx]);
      kept += ws[idx];
    }
    for (double& wgt : kw) wgt /= kept;
    xs.swap(kx);
    ws.swap(kw);
  }
  atom_x_.swap(xs);
  atom_w_.swap(ws);
}

void BayesFilter::step_collapsed(int t, const Vec& yw) {
  const FilterPlan& p = *plan_;
  const double a = p.A(0, 0);
  const double c = p.C(0, 0);

  if (std::abs(c) < 1e-300) {
    // The observation carries no information; track the predicted support.
    if (!prior_phase_) {
      for (double& x : atom_x_) x *= a;
    }
    return;
  }

  // Predicted density of the control-free state before this observation.
  auto predicted_pdf = [&](double x) -> double {
    if (prior_phase_) {
      if (p.gaussian_predict) {
        return std::exp(-0.5 * x * x / p.predict_var1) /
               std::sqrt(2 * kPi * p.predict_var1);
      }
      if (p.prior.is_point_mass()) {  // w continuous
        double f = 0;
        for (std::size_t m = 0; m < p.prior.atoms.size(); ++m) {
          f += p.prior.probs[m] * p.w.pdf1(x - a * p.prior.atoms[m](0));
        }
        return f;
      }
      if (p.w_is_zero) {
        return p.prior.pdf1(x / a) / std::abs(a);
      }
      double f = 0;
      for (int q = 0; q < p.quad_nodes.size(); ++q) {
        f += p.quad_w(q) * p.w.pdf1(x - a * p.quad_nodes(q));
      }
      return f;
    }
    double f = 0;
    for (std::size_t j = 0; j < atom_x_.size(); ++j) {
      f += atom_w_[j] * p.w.pdf1(x - a * atom_x_[j]);
    }
    return f;
  };

  std::vector<double> xs, ws;
  double z = 0;
  for (std::size_t k = 0; k < p.v.atoms.size(); ++k) {
    const double x = (yw(0) - p.v.atoms[k](0)) / c;
    double wgt;
    if (p.w_is_zero && !prior_phase_) {
      // Deterministic propagation: match against the predicted atoms.
      double mass = 0;
      for (std::size_t j = 0; j < atom_x_.size(); ++j) {
        const double pred = a * atom_x_[j];
        if (std::abs(pred - x) <= 1e-9 * std::max(1.0, std::abs(x))) {
          mass += atom_w_[j];
        }
      }
      wgt = p.v.probs[k] * mass;
    } else {
      wgt = p.v.probs[k] * predicted_pdf(x);
    }
    xs.push_back(x);
    ws.push_back(wgt);
    z += wgt;
  }
  if (!(z > 0) || !std::isfinite(z)) {
    throw numerical_error(
        "collapsed filter: observation has zero probability at step " +
        std::to_string(t) + " (" + agent_tag(p.agent) + ")");
  }
  for (double& wgt : ws) wgt /= z;
  atom_x_.swap(xs);
  atom_w_.swap(ws);
  prior_phase_ = false;
}

void BayesFilter::step_particles(int t, const Vec& yw) {
  const FilterPlan& p = *plan_;
  const int np = p.n_particles;
  rng::Stream wst(seed_, trial_, 4, static_cast<std::uint64_t>(p.agent),
                  static_cast<std::uint64_t>(t));
  double z = 0;
  for (int k = 0; k < np; ++k) {
    particles_.col(k) = p.A * particles_.col(k) + p.w.sample(wst, k);
    Vec resid = yw - p.C * particles_.col(k);
    particle_w_(k) *= p.v.pdf(resid);
    z += particle_w_(k);
  }
  if (!(z > 0) || !std::isfinite(z)) {
    throw numerical_error(
        "particle filter: all particle weights vanished at step " +
        std::to_string(t) + " (" + agent_tag(p.agent) + ")");
  }
  particle_w_ /= z;

  const double ess = 1.0 / particle_w_.squaredNorm();
  if (ess < np / 2.0) {
    rng::Stream rst(seed_, trial_, 5, static_cast<std::uint64_t>(p.agent),
                    static_cast<std::uint64_t>(t));
    const double u = rst.u01(0);
    Mat fresh(p.dx, np);
    double cum = particle_w_(0);
    int src = 0;
    for (int k = 0; k < np; ++k) {
      const double pos = (k + u) / np;
      while (cum < pos && src + 1 < np) cum += particle_w_(++src);
      fresh.col(k) = particles_.col(src);
    }
    particles_ = fresh;
    particle_w_.setConstant(1.0 / np);
  }
}

Vec BayesFilter::mean() const {
  switch (plan_->mode) {
    case BayesMode::KalmanExact:
    case BayesMode::ExactObservation:
      return point_;
    case BayesMode::Grid: {
      double m = 0;
      for (int j = 0; j < grid_f_.size(); ++j) {
        m += plan_->trapw(j) * plan_->nodes(j) * grid_f_(j);
      }
      return Vec::Constant(1, m);
    }
    case BayesMode::Atoms:
    case BayesMode::CollapsedAtoms: {
      if (prior_phase_) return Vec::Zero(1);  // zero-mean prior
      double m = 0;
      for (std::size_t j = 0; j < atom_x_.size(); ++j) {
        m += atom_w_[j] * atom_x_[j];
      }
      return Vec::Constant(1, m);
    }
    case BayesMode::Particles:
      return particles_ * particle_w_;
  }
  return Vec::Zero(plan_->dx);
}

// ---------------------------------------------------------------------------
// LlmsFilter
// ---------------------------------------------------------------------------

LlmsFilter::LlmsFilter(const Mat& A, const Mat& C, const FilterSchedule* sched)
    : A_(&A), C_(&C), sched_(sched) {
  xhat_ = Vec::Zero(A.rows());
}

void LlmsFilter::step(int t, const Vec& yw) {
  const Vec pred = (*A_) * xhat_;
  xhat_ = pred + sched_->K[t] * (yw - (*C_) * pred);
}

}  // namespace mmlq
