#include "mcps/perturb.hpp"

#include <cmath>
#include <string>

namespace mcps {

namespace {

void check_common(const Vector& theta, double delta, const Vector& Delta, const char* op) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw InputError(std::string(op) + ": delta must be positive and finite");
  }
  if (Delta.size() != theta.size()) {
    throw InputError(std::string(op) + ": perturbation dimension does not match theta");
  }
}

void check_nonzero(const Vector& v, const char* op) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) {
      throw InputError(std::string(op) + ": perturbation coordinate " + std::to_string(i) +
                       " is zero");
    }
  }
}

}  // namespace

Vector sample_perturbation(PerturbationKind kind, int dim, SeededRng& rng) {
  if (dim < 1) throw InputError("sample_perturbation: dimension must be >= 1");
  Vector d(dim);
  for (int i = 0; i < dim; ++i) {
    d[i] = kind == PerturbationKind::Rademacher ? rng.rademacher() : rng.normal();
  }
  return d;
}

GradEstimate spsa_gradient(const Evaluator& eval, const Vector& theta, double delta,
                           const Vector& Delta) {
  check_common(theta, delta, Delta, "spsa_gradient");
  check_nonzero(Delta, "spsa_gradient");
  GradEstimate est;
  est.delta_dir = Delta;
  est.j_plus = eval.evaluate(theta + delta * Delta).j;
  est.j_minus = eval.evaluate(theta - delta * Delta).j;
  const double diff = est.j_plus - est.j_minus;
  est.g.resize(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) est.g[i] = diff / (2.0 * delta * Delta[i]);
  return est;
}

GradEstimate sf_gradient(const Evaluator& eval, const Vector& theta, double delta,
                         const Vector& Delta) {
  check_common(theta, delta, Delta, "sf_gradient");
  GradEstimate est;
  est.delta_dir = Delta;
  est.j_plus = eval.evaluate(theta + delta * Delta).j;
  est.j_minus = eval.evaluate(theta - delta * Delta).j;
  const double diff = est.j_plus - est.j_minus;
  est.g.resize(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) est.g[i] = Delta[i] / (2.0 * delta) * diff;
  return est;
}

HessEstimate spsa_hessian_sample(const Evaluator& eval, const Vector& theta, double delta,
                                 const Vector& Delta, const Vector& DeltaHat) {
  check_common(theta, delta, Delta, "spsa_hessian_sample");
  check_common(theta, delta, DeltaHat, "spsa_hessian_sample");
  check_nonzero(Delta, "spsa_hessian_sample");
  check_nonzero(DeltaHat, "spsa_hessian_sample");

  HessEstimate est;
  est.delta_dir = Delta;
  est.delta_hat_dir = DeltaHat;
  const Vector shifted = theta + delta * Delta;
  est.j_a = eval.evaluate(shifted + delta * DeltaHat).j;
  est.j_b = eval.evaluate(shifted).j;
  const double diff = est.j_a - est.j_b;

  const Eigen::Index n = theta.size();
  est.H.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      est.H(i, j) = diff / (delta * delta * Delta[j] * DeltaHat[i]);
      est.H(j, i) = est.H(i, j);
    }
  }
  return est;
}

Matrix sf_moment_matrix(const Vector& Delta) {
  Matrix Hbar = Delta * Delta.transpose();
  Hbar.diagonal().array() -= 1.0;
  return Hbar;
}

HessEstimate sf_hessian_sample(const Evaluator& eval, const Vector& theta, double delta,
                               const Vector& Delta, bool literal_scaling) {
  check_common(theta, delta, Delta, "sf_hessian_sample");
  HessEstimate est;
  est.delta_dir = Delta;
  est.j_a = eval.evaluate(theta + delta * Delta).j;
  est.j_b = eval.evaluate(theta - delta * Delta).j;
  const double scale = (literal_scaling ? 1.0 : 0.5) / (delta * delta);
  est.H = sf_moment_matrix(Delta) * (scale * (est.j_a + est.j_b));
  return est;
}

}  // namespace mcps
