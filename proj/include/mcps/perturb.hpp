#pragma once

#include "mcps/core.hpp"
#include "mcps/evaluator.hpp"

namespace mcps {

/// Rademacher for SPSA, standard Gaussian for smoothed functional (SF).
enum class PerturbationKind { Rademacher, Gaussian };

Vector sample_perturbation(PerturbationKind kind, int dim, SeededRng& rng);

struct GradEstimate {
  Vector g;
  Vector delta_dir;  // Delta
  double j_plus = 0.0;   // J(theta + delta*Delta)
  double j_minus = 0.0;  // J(theta - delta*Delta)
};

struct HessEstimate {
  Matrix H;
  Vector delta_dir;      // Delta
  Vector delta_hat_dir;  // Delta-hat (SPSA only; empty for SF)
  double j_a = 0.0;  // SPSA: J(theta + delta*Delta + delta*DeltaHat); SF: J(theta + delta*Delta)
  double j_b = 0.0;  // SPSA: J(theta + delta*Delta);                  SF: J(theta - delta*Delta)
};

/// g_i = (J(theta + delta*Delta) - J(theta - delta*Delta)) / (2 delta Delta_i).
GradEstimate spsa_gradient(const Evaluator& eval, const Vector& theta, double delta,
                           const Vector& Delta);

/// g_i = Delta_i / (2 delta) * (J(theta + delta*Delta) - J(theta - delta*Delta)).
GradEstimate sf_gradient(const Evaluator& eval, const Vector& theta, double delta,
                         const Vector& Delta);

/// One-sided SPSA Hessian sample
///   H_ij = (J(theta + delta*Delta + delta*DeltaHat) - J(theta + delta*Delta))
///          / (delta^2 Delta_j DeltaHat_i),  i <= j,
/// with the lower triangle copied from the upper one.
HessEstimate spsa_hessian_sample(const Evaluator& eval, const Vector& theta, double delta,
                                 const Vector& Delta, const Vector& DeltaHat);

/// The N x N moment matrix with (Delta_i^2 - 1) on the diagonal and
/// Delta_i Delta_j elsewhere.
Matrix sf_moment_matrix(const Vector& Delta);

/// SF Hessian sample scale * Hbar(Delta) * (J(theta + delta*Delta) + J(theta - delta*Delta)).
/// scale is 1/(2 delta^2), which makes the estimate unbiased on quadratics;
/// `literal_scaling` uses 1/delta^2 instead, whose expectation is twice the Hessian.
HessEstimate sf_hessian_sample(const Evaluator& eval, const Vector& theta, double delta,
                               const Vector& Delta, bool literal_scaling = false);

}  // namespace mcps
