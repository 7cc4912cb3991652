#pragma once

namespace mmlq::tol {

// Exact (enumeration-backed) checks: absolute deviation bound.
inline constexpr double kExact = 1e-10;

// Monte Carlo checks: |sample mean| must stay within kSigmas standard errors.
inline constexpr double kMcSigmas = 4.0;

// Positive semi-definiteness: min eigenvalue >= -kPsdRel * ||M||.
inline constexpr double kPsdRel = 1e-9;

// Positive definiteness: min eigenvalue >= kPdRel * ||M||.
inline constexpr double kPdRel = 1e-9;

// Symmetry: ||M - M^T|| <= kSymRel * ||M|| (inputs are rejected above this,
// matrices we produce are symmetrized).
inline constexpr double kSymRel = 1e-12;

// State-split reconstruction residual per step, relative to ||x||.
inline constexpr double kReconstruct = 1e-8;

// Stored-trajectory replay residual (dynamics and observations re-applied).
inline constexpr double kReplay = 1e-12;

// Exact conditional-independence factorization of enumerated laws.
inline constexpr double kFactorization = 1e-12;

// Deterministic full-information value identity, relative.
inline constexpr double kValueIdentity = 1e-9;

// Density filter defaults.
inline constexpr int kGridNodes = 1025;
inline constexpr double kGridSpanSigmas = 8.0;
inline constexpr int kParticles = 4096;
inline constexpr int kAtomBudget = 4096;
inline constexpr int kQuadratureNodes = 2001;

// Exhaustive-enumeration guard on the primitive outcome count.
inline constexpr double kOutcomeGuard = 1e6;

// Minimum batch size for the regression fallback of the control split.
inline constexpr int kRegressionMinBatch = 100;

}  // namespace mmlq::tol
