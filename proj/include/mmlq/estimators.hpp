#pragma once

#include <cstdint>
#include <vector>

#include "mmlq/riccati.hpp"
#include "mmlq/scenario.hpp"

namespace mmlq {

// ---------------------------------------------------------------------------
// Major agent's common-information estimate of the stacked state. The filter
// is linear and strategy-independent in form; it consumes the realized major
// state/control and each minor agent's common control component. Component 0
// always equals the observed major state exactly.
// ---------------------------------------------------------------------------
class CommonFilter {
 public:
  explicit CommonFilter(const Scenario& s);

  void init(const Vec& x0_first);  // t = 1: [x0(1); 0; ...; 0]
  // Advance t -> t+1.
  void step(const Vec& x0_next, const Vec& x0_now, const Vec& u0,
            const std::vector<Vec>& ucom_minors);

  const Vec& xhat() const { return xhat_; }
  Vec minor_block(int i) const;  // block of agent i (1-based)

 private:
  const Scenario* s_;
  Vec xhat_;
};

// ---------------------------------------------------------------------------
// Minor agent's conditional-density filter. It runs in the control-free
// coordinates: the tracked quantity is the noise-driven state component
// x^w_i (x^w_i(1) = x_i(1), x^w_i(t+1) = A_ii x^w_i(t) + w_i(t)) and the
// consumed signal is the control-free observation part
// y^w_i(t) = C_ii x^w_i(t) + v_i(t). This is an exact change of variables of
// the density update on x_i given I_i(t), and it makes the posterior a
// bitwise strategy-independent function of the primitive draws. The agent's
// state estimate is x^g_i(t) + mean().
//
// Estimates incorporate observations from t = 2 on; at t = 1 the filter holds
// the prior of x_i(1).
// ---------------------------------------------------------------------------
enum class BayesMode {
  KalmanExact,       // prior, w, v all Gaussian: closed-form posterior mean
  Grid,              // scalar state, continuous noise: fixed-grid density
  Atoms,             // finite-support prior and w: exact weighted atoms
  CollapsedAtoms,    // point-mass v: posterior collapses onto |supp(v)| atoms
  ExactObservation,  // v = 0, invertible C: posterior is a point mass
  Particles,         // multivariate state: systematic-resampling particles
};

enum class BayesModeOverride { Auto, ForceGrid, ForceParticles };

// Immutable per-(scenario, agent) data shared by all trials.
struct FilterPlan {
  BayesMode mode = BayesMode::Grid;
  int agent = 0;
  int dx = 0;
  Mat A, C;
  NoiseDist prior, w, v;

  // Grid mode
  Vec nodes, trapw;   // quadrature nodes and weights
  Mat kernel;         // predict operator: f_pred = kernel * f
  Vec init_f;         // density values of the t=1 prior at the nodes

  // Atoms mode: t=1 prior support (scalar)
  std::vector<double> atom0_x, atom0_w;

  // KalmanExact mode
  FilterSchedule kalman;

  // ExactObservation mode
  Mat C_inv;

  // CollapsedAtoms mode
  Vec quad_nodes, quad_w;  // quadrature over the prior for the first update
  bool w_is_zero = false;
  bool gaussian_predict = false;  // prior and w both Gaussian: closed form
  double predict_var1 = 0;        // var of x^w(2) when gaussian_predict

  // Particles mode
  int n_particles = 0;
};

FilterPlan make_filter_plan(const Scenario& s, int i,
                            BayesModeOverride ov = BayesModeOverride::Auto);

class BayesFilter {
 public:
  BayesFilter(const FilterPlan& plan, std::uint64_t seed, std::uint64_t trial);

  void step(int t, const Vec& yw);  // t = 2..T
  Vec mean() const;
  BayesMode mode() const { return plan_->mode; }

  // Representation internals, exposed for exactness tests and bitwise
  // strategy-independence checks.
  const Vec& grid_values() const { return grid_f_; }
  const std::vector<double>& atom_locations() const { return atom_x_; }
  const std::vector<double>& atom_weights() const { return atom_w_; }
  const Mat& particles() const { return particles_; }
  const Vec& particle_weights() const { return particle_w_; }

 private:
  void step_grid(const Vec& yw);
  void step_atoms(const Vec& yw);
  void step_collapsed(int t, const Vec& yw);
  void step_particles(int t, const Vec& yw);

  const FilterPlan* plan_;
  std::uint64_t seed_ = 0, trial_ = 0;

  Vec grid_f_;                   // density values at plan nodes
  std::vector<double> atom_x_;   // scalar atom locations
  std::vector<double> atom_w_;
  bool prior_phase_ = false;     // collapsed mode: no observation folded yet
  Vec point_;                    // kalman / exact-observation mean
  Mat kalman_P_;                 // unused placeholder (schedule is in plan)
  Mat particles_;                // dx x N
  Vec particle_w_;
};

// ---------------------------------------------------------------------------
// Minor agent's linear least-squares filter in the same control-free
// coordinates, with the precomputed control-free gain schedule:
// xhat(1) = 0, xhat(t) = A xhat(t-1) + K(t) (yw(t) - C A xhat(t-1)).
// ---------------------------------------------------------------------------
class LlmsFilter {
 public:
  LlmsFilter(const Mat& A, const Mat& C, const FilterSchedule* sched);

  void step(int t, const Vec& yw);  // t = 2..T
  const Vec& mean() const { return xhat_; }

 private:
  const Mat *A_, *C_;
  const FilterSchedule* sched_;
  Vec xhat_;
};

}  // namespace mmlq
