#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "mcps/core.hpp"
#include "mcps/mfmc.hpp"

namespace mcps {

struct StepOutcome {
  double cost = 0.0;
  Vector next;
};

/// Stochastic system x' = f(x, u, w), cost c(x, u, w), with scalar disturbance w.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vector x0() const = 0;
  virtual double gamma() const = 0;

  virtual double sample_disturbance(SeededRng& rng) const = 0;
  /// Deterministic given w.
  virtual StepOutcome transition(const Vector& x, const Vector& u, double w) const = 0;
};

/// sin(pi z) / (pi z), 1 at the origin.
double sinc(double z);

/// x' = sinc(10 (x + u + w)), c = -exp(-(x^2 + u^2)/2 + w) / (2 pi),
/// w ~ U[-epsilon/2, epsilon/2].
class SincEnv final : public Environment {
 public:
  explicit SincEnv(double epsilon = 0.01, double gamma = 0.95, double x0 = -1.0);

  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  Vector x0() const override { return Vector::Constant(1, x0_); }
  double gamma() const override { return gamma_; }
  double epsilon() const noexcept { return epsilon_; }

  double sample_disturbance(SeededRng& rng) const override;
  StepOutcome transition(const Vector& x, const Vector& u, double w) const override;

 private:
  double epsilon_;
  double gamma_;
  double x0_;
};

/// Linear dynamics x' = a_f x + b_f u + w with an affine cost clamped to [0, 1]:
/// c = clamp(c0 + k_x x + k_u u + w, 0, 1). Lipschitz constants are exact under
/// the L1 state-action metric: L_f = max(|a_f|, |b_f|), L_c = max(|k_x|, |k_u|).
class LipschitzLabEnv final : public Environment {
 public:
  struct Params {
    double a_f = 0.4;
    double b_f = 0.3;
    double c0 = 0.5;
    double k_x = 0.25;
    double k_u = 0.15;
    double noise = 0.05;  // w ~ U[-noise, noise]
    double gamma = 0.9;
    double x0 = 0.5;
  };

  LipschitzLabEnv() : LipschitzLabEnv(Params{}) {}
  explicit LipschitzLabEnv(Params params);

  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  Vector x0() const override { return Vector::Constant(1, params_.x0); }
  double gamma() const override { return params_.gamma; }
  const Params& params() const noexcept { return params_; }

  double sample_disturbance(SeededRng& rng) const override;
  StepOutcome transition(const Vector& x, const Vector& u, double w) const override;

  double L_f() const noexcept;
  double L_c() const noexcept;

 private:
  Params params_;
};

/// Environment assembled from callables; mainly for tests.
class FunctionEnv final : public Environment {
 public:
  using Step = std::function<StepOutcome(const Vector&, const Vector&, double)>;
  using Noise = std::function<double(SeededRng&)>;

  FunctionEnv(int state_dim, int action_dim, Vector x0, double gamma, Step step,
              Noise noise = nullptr);

  int state_dim() const override { return dx_; }
  int action_dim() const override { return du_; }
  Vector x0() const override { return x0_; }
  double gamma() const override { return gamma_; }

  double sample_disturbance(SeededRng& rng) const override { return noise_ ? noise_(rng) : 0.0; }
  StepOutcome transition(const Vector& x, const Vector& u, double w) const override {
    return step_(x, u, w);
  }

 private:
  int dx_;
  int du_;
  Vector x0_;
  double gamma_;
  Step step_;
  Noise noise_;
};

/// One sampled transition.
StepOutcome env_step(const Environment& env, const Vector& x, const Vector& u, SeededRng& rng);

/// sigma = floor(sqrt(n)); transitions at (-1 + 2i/sigma, -1 + 2j/sigma) for
/// i, j in [0, sigma), i (state) outer. Size is sigma^2. 1-D state and action only.
BatchDataset generate_grid_dataset(const Environment& env, int n, SeededRng& rng,
                                   StateActionMetric metric = {});

/// n transitions at pairs drawn uniformly from [lo, hi]^(d_X + d_U).
BatchDataset generate_uniform_dataset(const Environment& env, int n, SeededRng& rng,
                                      double lo = -1.0, double hi = 1.0,
                                      StateActionMetric metric = {});

struct OracleResult {
  double mean = 0.0;
  double variance = 0.0;  // of the discounted return
  double se = 0.0;        // standard error of the mean
};

/// Monte Carlo estimate of J^theta(x0) from `rollouts` trajectories of length
/// `horizon`. Rollout r uses its own stream, so the result does not depend on
/// `threads`.
OracleResult oracle_return(const Environment& env, const PolicySpec& policy, const Vector& theta,
                           int rollouts, int horizon, SeededRng& rng, int threads = 1);

/// Exact constants of the lab environment for a linear policy; L_theta is the
/// induced L1 norm of the gain (|theta| in 1-D). UnsupportedEnvironmentError
/// for any other environment.
LipschitzConstants lipschitz_constants(const Environment& env, const PolicySpec& policy,
                                       const Vector& theta);

}  // namespace mcps
