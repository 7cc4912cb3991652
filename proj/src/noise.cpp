#include "mmlq/noise.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

#include "mmlq/errors.hpp"

namespace mmlq {

namespace rng {

namespace {
constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x += kGamma;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t trial,
                         std::uint64_t kind, std::uint64_t agent,
                         std::uint64_t time) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ trial);
  k = mix64(k ^ (kind * 0x100000001b3ULL + agent));
  k = mix64(k ^ time);
  return k;
}

double Stream::u01(std::uint64_t k) const {
  std::uint64_t bits = mix64(key + k * kGamma);
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double Stream::u01_open(std::uint64_t k) const {
  std::uint64_t bits = mix64(key + k * kGamma);
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

double Stream::normal(std::uint64_t k) const {
  double u1 = u01_open(2 * k);
  double u2 = u01(2 * k + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rng

namespace {

Mat chol_of(const Mat& cov, const std::string& what) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    // allow PSD-singular covariances via LDLT reconstruction
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    Vec ev = es.eigenvalues();
    double floor = -1e-12 * std::max(1.0, cov.norm());
    for (int i = 0; i < ev.size(); ++i) {
      if (ev[i] < floor)
        throw validation_error(what + ": covariance not positive semi-definite");
      ev[i] = std::max(ev[i], 0.0);
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
  }
  return llt.matrixL();
}

void fill_gaussian_cache(const Mat& cov, Mat& chol, Mat& inv, double& nrm,
                         const std::string& what) {
  chol = chol_of(cov, what);
  Eigen::LDLT<Mat> ldlt(cov);
  const auto d = static_cast<double>(cov.rows());
  double det = cov.determinant();
  if (det > 0) {
    inv = ldlt.solve(Mat::Identity(cov.rows(), cov.cols()));
    nrm = 1.0 / std::sqrt(std::pow(2.0 * std::numbers::pi, d) * det);
  } else {
    inv = Mat();  // density undefined; sampling still works via chol
    nrm = 0.0;
  }
}

}  // namespace

NoiseDist NoiseDist::point_mass(std::vector<Vec> atoms,
                                std::vector<double> p) {
  NoiseDist d;
  d.family = NoiseFamily::PointMass;
  d.dim = atoms.empty() ? 0 : static_cast<int>(atoms.front().size());
  d.atoms = std::move(atoms);
  d.probs = std::move(p);
  return d;
}

NoiseDist NoiseDist::zero(int dim) {
  return point_mass({Vec::Zero(dim)}, {1.0});
}

NoiseDist NoiseDist::gaussian(Mat cov) {
  NoiseDist d;
  d.family = NoiseFamily::Gaussian;
  d.dim = static_cast<int>(cov.rows());
  d.cov = std::move(cov);
  fill_gaussian_cache(d.cov, d.chol, d.cov_inv, d.norm_const, "gaussian");
  return d;
}

NoiseDist NoiseDist::uniform(Vec half_width) {
  NoiseDist d;
  d.family = NoiseFamily::Uniform;
  d.dim = static_cast<int>(half_width.size());
  d.scale = std::move(half_width);
  return d;
}

NoiseDist NoiseDist::laplace(Vec scale) {
  NoiseDist d;
  d.family = NoiseFamily::Laplace;
  d.dim = static_cast<int>(scale.size());
  d.scale = std::move(scale);
  return d;
}

NoiseDist NoiseDist::gaussian_mixture(std::vector<MixtureComponent> comps) {
  NoiseDist d;
  d.family = NoiseFamily::GaussianMixture;
  d.dim = comps.empty() ? 0 : static_cast<int>(comps.front().mean.size());
  d.components = std::move(comps);
  for (auto& c : d.components)
    fill_gaussian_cache(c.cov, c.chol, c.cov_inv, c.norm_const,
                        "gaussian_mixture component");
  return d;
}

Vec NoiseDist::mean() const {
  Vec m = Vec::Zero(dim);
  switch (family) {
    case NoiseFamily::PointMass:
      for (size_t k = 0; k < atoms.size(); ++k) m += probs[k] * atoms[k];
      break;
    case NoiseFamily::GaussianMixture:
      for (const auto& c : components) m += c.weight * c.mean;
      break;
    default:
      break;  // symmetric families are zero mean by construction
  }
  return m;
}

Mat NoiseDist::variance() const {
  switch (family) {
    case NoiseFamily::PointMass: {
      Mat v = Mat::Zero(dim, dim);
      Vec m = mean();
      for (size_t k = 0; k < atoms.size(); ++k) {
        Vec d = atoms[k] - m;
        v += probs[k] * d * d.transpose();
      }
      return v;
    }
    case NoiseFamily::Gaussian:
      return cov;
    case NoiseFamily::Uniform:
      return (scale.array().square() / 3.0).matrix().asDiagonal();
    case NoiseFamily::Laplace:
      return (2.0 * scale.array().square()).matrix().asDiagonal();
    case NoiseFamily::GaussianMixture: {
      Mat v = Mat::Zero(dim, dim);
      Vec m = mean();
      for (const auto& c : components) {
        Vec d = c.mean - m;
        v += c.weight * (c.cov + d * d.transpose());
      }
      return v;
    }
  }
  return Mat::Zero(dim, dim);
}

bool NoiseDist::is_zero() const {
  if (!is_point_mass()) return false;
  for (const auto& a : atoms)
    if (a.norm() != 0.0) return false;
  return true;
}

double NoiseDist::pdf(const Vec& x) const {
  switch (family) {
    case NoiseFamily::Gaussian: {
      if (norm_const == 0.0)
        throw numerical_error("gaussian density with singular covariance");
      double q = x.dot(cov_inv * x);
      return norm_const * std::exp(-0.5 * q);
    }
    case NoiseFamily::Uniform: {
      double dens = 1.0;
      for (int i = 0; i < dim; ++i) {
        if (std::abs(x[i]) > scale[i]) return 0.0;
        dens /= 2.0 * scale[i];
      }
      return dens;
    }
    case NoiseFamily::Laplace: {
      double dens = 1.0;
      for (int i = 0; i < dim; ++i)
        dens *= std::exp(-std::abs(x[i]) / scale[i]) / (2.0 * scale[i]);
      return dens;
    }
    case NoiseFamily::GaussianMixture: {
      double dens = 0.0;
      for (const auto& c : components) {
        if (c.norm_const == 0.0)
          throw numerical_error(
              "gaussian_mixture density with singular component");
        Vec d = x - c.mean;
        dens += c.weight * c.norm_const * std::exp(-0.5 * d.dot(c.cov_inv * d));
      }
      return dens;
    }
    case NoiseFamily::PointMass:
      throw numerical_error("point-mass distribution has no density");
  }
  return 0.0;
}

double NoiseDist::pdf1(double x) const {
  Vec v(1);
  v[0] = x;
  return pdf(v);
}

Vec NoiseDist::sample(const rng::Stream& stream, std::uint64_t k) const {
  // Each sample owns a fixed counter window so draws never overlap:
  // [k*stride, (k+1)*stride). Box-Muller consumes two counters per normal.
  const std::uint64_t stride = 2 * static_cast<std::uint64_t>(dim) + 2;
  const std::uint64_t base = k * stride;
  switch (family) {
    case NoiseFamily::PointMass: {
      double u = stream.u01(base);
      double acc = 0.0;
      for (size_t j = 0; j < atoms.size(); ++j) {
        acc += probs[j];
        if (u < acc) return atoms[j];
      }
      return atoms.back();
    }
    case NoiseFamily::Gaussian: {
      Vec z(dim);
      for (int i = 0; i < dim; ++i)
        z[i] = stream.normal(base / 2 + 1 + static_cast<std::uint64_t>(i));
      return chol * z;
    }
    case NoiseFamily::Uniform: {
      Vec x(dim);
      for (int i = 0; i < dim; ++i)
        x[i] = (2.0 * stream.u01(base + 1 + static_cast<std::uint64_t>(i)) -
                1.0) * scale[i];
      return x;
    }
    case NoiseFamily::Laplace: {
      Vec x(dim);
      for (int i = 0; i < dim; ++i) {
        double s = stream.u01_open(base + 1 + static_cast<std::uint64_t>(i)) -
                   0.5;
        double mag = -std::log(1.0 - 2.0 * std::abs(s));
        x[i] = (s < 0 ? -1.0 : 1.0) * scale[i] * mag;
      }
      return x;
    }
    case NoiseFamily::GaussianMixture: {
      double u = stream.u01(base);
      double acc = 0.0;
      size_t pick = components.size() - 1;
      for (size_t j = 0; j < components.size(); ++j) {
        acc += components[j].weight;
        if (u < acc) {
          pick = j;
          break;
        }
      }
      const auto& c = components[pick];
      Vec z(dim);
      for (int i = 0; i < dim; ++i)
        z[i] = stream.normal(base / 2 + 1 + static_cast<std::uint64_t>(i));
      return c.mean + c.chol * z;
    }
  }
  return Vec::Zero(dim);
}

NoiseDist noise_from_json(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("family"))
    throw validation_error(field + ": expected {\"family\": ...}");
  std::string fam = j.at("family").get<std::string>();
  if (fam == "point_mass") {
    check_keys(j, {"family", "atoms", "probs"}, field);
    if (!j.contains("atoms") || !j.contains("probs"))
      throw validation_error(field + ": point_mass needs atoms and probs");
    std::vector<Vec> atoms;
    for (const auto& a : j.at("atoms"))
      atoms.push_back(vec_from_json(a, field + ".atoms"));
    std::vector<double> probs = j.at("probs").get<std::vector<double>>();
    return NoiseDist::point_mass(std::move(atoms), std::move(probs));
  }
  if (fam == "gaussian") {
    check_keys(j, {"family", "cov"}, field);
    return NoiseDist::gaussian(mat_from_json(j.at("cov"), field + ".cov"));
  }
  if (fam == "uniform") {
    check_keys(j, {"family", "half_width"}, field);
    return NoiseDist::uniform(
        vec_from_json(j.at("half_width"), field + ".half_width"));
  }
  if (fam == "laplace") {
    check_keys(j, {"family", "scale"}, field);
    return NoiseDist::laplace(vec_from_json(j.at("scale"), field + ".scale"));
  }
  if (fam == "gaussian_mixture") {
    check_keys(j, {"family", "components"}, field);
    std::vector<MixtureComponent> comps;
    for (const auto& c : j.at("components")) {
      check_keys(c, {"weight", "mean", "cov"}, field + ".components");
      MixtureComponent mc;
      mc.weight = c.at("weight").get<double>();
      mc.mean = vec_from_json(c.at("mean"), field + ".mean");
      mc.cov = mat_from_json(c.at("cov"), field + ".cov");
      comps.push_back(std::move(mc));
    }
    return NoiseDist::gaussian_mixture(std::move(comps));
  }
  throw validation_error(field + ": unknown noise family '" + fam + "'");
}

json noise_to_json(const NoiseDist& d) {
  json j;
  switch (d.family) {
    case NoiseFamily::PointMass: {
      j["family"] = "point_mass";
      json atoms = json::array();
      for (const auto& a : d.atoms) atoms.push_back(vec_to_json(a));
      j["atoms"] = atoms;
      j["probs"] = d.probs;
      break;
    }
    case NoiseFamily::Gaussian:
      j["family"] = "gaussian";
      j["cov"] = mat_to_json(d.cov);
      break;
    case NoiseFamily::Uniform:
      j["family"] = "uniform";
      j["half_width"] = vec_to_json(d.scale);
      break;
    case NoiseFamily::Laplace:
      j["family"] = "laplace";
      j["scale"] = vec_to_json(d.scale);
      break;
    case NoiseFamily::GaussianMixture: {
      j["family"] = "gaussian_mixture";
      json comps = json::array();
      for (const auto& c : d.components) {
        json cj;
        cj["weight"] = c.weight;
        cj["mean"] = vec_to_json(c.mean);
        cj["cov"] = mat_to_json(c.cov);
        comps.push_back(cj);
      }
      j["components"] = comps;
      break;
    }
  }
  return j;
}

}  // namespace mmlq
