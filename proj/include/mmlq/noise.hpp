#pragma once

#include <cstdint>
#include <vector>

#include "mmlq/linalg.hpp"

namespace mmlq {

// Counter-based deterministic random stream. Every draw is a pure function of
// (seed, trial, variable id, time, draw index), so sequential and parallel
// runs see identical noise and paired strategy comparisons share draws.
namespace rng {

std::uint64_t mix64(std::uint64_t x);

// Identity of a primitive random variable: kind 0 = initial state, 1 =
// process noise, 2 = observation noise, 3+ = auxiliary streams (particle
// filter, scenario randomization in tests, ...).
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t trial,
                         std::uint64_t kind, std::uint64_t agent,
                         std::uint64_t time);

struct Stream {
  std::uint64_t key = 0;
  Stream() = default;
  Stream(std::uint64_t seed, std::uint64_t trial, std::uint64_t kind,
         std::uint64_t agent, std::uint64_t time)
      : key(stream_key(seed, trial, kind, agent, time)) {}

  // k-th uniform in [0, 1).
  double u01(std::uint64_t k) const;
  // k-th uniform in (0, 1] (safe for logarithms).
  double u01_open(std::uint64_t k) const;
  // k-th standard normal (Box-Muller; uses uniforms 2k and 2k+1).
  double normal(std::uint64_t k) const;
};

}  // namespace rng

enum class NoiseFamily {
  PointMass,        // finite support with probabilities
  Gaussian,         // zero mean, full covariance
  Uniform,          // per-coordinate on [-b, b]
  Laplace,          // per-coordinate, scale b
  GaussianMixture,  // components (weight, mean, cov); mixture mean must be 0
};

struct MixtureComponent {
  double weight = 0;
  Vec mean;
  Mat cov;
  // filled by the factory: Cholesky factor, inverse, density normalizer
  Mat chol, cov_inv;
  double norm_const = 0;
};

struct NoiseDist {
  NoiseFamily family = NoiseFamily::PointMass;
  int dim = 0;

  // PointMass
  std::vector<Vec> atoms;
  std::vector<double> probs;
  // Gaussian
  Mat cov;
  // Uniform / Laplace (per-coordinate parameter)
  Vec scale;
  // GaussianMixture
  std::vector<MixtureComponent> components;
  // Gaussian precomputations (filled by the factory)
  Mat chol, cov_inv;
  double norm_const = 0;

  static NoiseDist point_mass(std::vector<Vec> atoms, std::vector<double> p);
  static NoiseDist zero(int dim);  // point mass at the origin
  static NoiseDist gaussian(Mat cov);
  static NoiseDist uniform(Vec half_width);
  static NoiseDist laplace(Vec scale);
  static NoiseDist gaussian_mixture(std::vector<MixtureComponent> comps);

  // Analytic (never estimated) moments.
  Vec mean() const;
  Mat variance() const;

  bool is_point_mass() const { return family == NoiseFamily::PointMass; }
  // Has a density (everything except point masses).
  bool is_continuous() const { return !is_point_mass(); }
  bool is_zero() const;  // point mass entirely at the origin
  bool is_gaussian() const { return family == NoiseFamily::Gaussian; }

  // Density at a point (continuous families only).
  double pdf(const Vec& x) const;
  double pdf1(double x) const;  // scalar convenience

  // Draws the k-th i.i.d. sample of this distribution from `stream`
  // (each sample consumes a fixed, family-dependent counter range).
  Vec sample(const rng::Stream& stream, std::uint64_t k = 0) const;
};

// JSON form: {"family": "...", ...family parameters...}.
NoiseDist noise_from_json(const json& j, const std::string& field);
json noise_to_json(const NoiseDist& d);

}  // namespace mmlq
