#include "mcps/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

namespace mcps {

double sinc(double z) {
  const double pz = std::numbers::pi * z;
  if (std::abs(pz) < 1e-12) return 1.0;
  return std::sin(pz) / pz;
}

SincEnv::SincEnv(double epsilon, double gamma, double x0) : epsilon_(epsilon), gamma_(gamma), x0_(x0) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InputError("sinc env: epsilon must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("sinc env: gamma must be in (0, 1)");
  if (!std::isfinite(x0)) throw InputError("sinc env: x0 must be finite");
}

double SincEnv::sample_disturbance(SeededRng& rng) const {
  if (epsilon_ == 0.0) return 0.0;
  return rng.uniform(-0.5 * epsilon_, 0.5 * epsilon_);
}

StepOutcome SincEnv::transition(const Vector& x, const Vector& u, double w) const {
  const double xs = x[0];
  const double us = u[0];
  const double cost = -std::exp(-(xs * xs + us * us) / 2.0 + w) / (2.0 * std::numbers::pi);
  return {cost, Vector::Constant(1, sinc(10.0 * (xs + us + w)))};
}

// ---------------------------------------------------------------------------

LipschitzLabEnv::LipschitzLabEnv(Params params) : params_(params) {
  const auto& p = params_;
  if (!std::isfinite(p.a_f + p.b_f + p.c0 + p.k_x + p.k_u + p.x0)) {
    throw InputError("lab env: parameters must be finite");
  }
  if (!(p.noise >= 0.0)) throw InputError("lab env: noise must be >= 0");
  if (!(p.gamma > 0.0 && p.gamma < 1.0)) throw InputError("lab env: gamma must be in (0, 1)");
}

double LipschitzLabEnv::sample_disturbance(SeededRng& rng) const {
  if (params_.noise == 0.0) return 0.0;
  return rng.uniform(-params_.noise, params_.noise);
}

StepOutcome LipschitzLabEnv::transition(const Vector& x, const Vector& u, double w) const {
  const auto& p = params_;
  const double cost = std::clamp(p.c0 + p.k_x * x[0] + p.k_u * u[0] + w, 0.0, 1.0);
  return {cost, Vector::Constant(1, p.a_f * x[0] + p.b_f * u[0] + w)};
}

double LipschitzLabEnv::L_f() const noexcept { return std::max(std::abs(params_.a_f), std::abs(params_.b_f)); }
double LipschitzLabEnv::L_c() const noexcept { return std::max(std::abs(params_.k_x), std::abs(params_.k_u)); }

// ---------------------------------------------------------------------------

FunctionEnv::FunctionEnv(int state_dim, int action_dim, Vector x0, double gamma, Step step, Noise noise)
    : dx_(state_dim), du_(action_dim), x0_(std::move(x0)), gamma_(gamma), step_(std::move(step)),
      noise_(std::move(noise)) {
  if (dx_ < 1 || du_ < 1) throw InputError("function env: dimensions must be >= 1");
  if (x0_.size() != dx_) throw InputError("function env: x0 dimension mismatch");
  if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw InputError("function env: gamma must be in (0, 1)");
  if (!step_) throw InputError("function env: missing step function");
}

StepOutcome env_step(const Environment& env, const Vector& x, const Vector& u, SeededRng& rng) {
  return env.transition(x, u, env.sample_disturbance(rng));
}

BatchDataset generate_grid_dataset(const Environment& env, int n, SeededRng& rng,
                                   StateActionMetric metric) {
  if (n < 4) throw InputError("grid dataset: n must be >= 4");
  if (env.state_dim() != 1 || env.action_dim() != 1) {
    throw InputError("grid dataset: only 1-D state and action are supported");
  }
  int sigma = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while (static_cast<long>(sigma + 1) * (sigma + 1) <= n) ++sigma;
  while (static_cast<long>(sigma) * sigma > n) --sigma;

  std::vector<Transition> ts;
  ts.reserve(static_cast<std::size_t>(sigma) * sigma);
  for (int i = 0; i < sigma; ++i) {
    for (int j = 0; j < sigma; ++j) {
      Transition tr;
      tr.x = Vector::Constant(1, -1.0 + 2.0 * i / sigma);
      tr.u = Vector::Constant(1, -1.0 + 2.0 * j / sigma);
      auto out = env_step(env, tr.x, tr.u, rng);
      tr.c = out.cost;
      tr.y = std::move(out.next);
      ts.push_back(std::move(tr));
    }
  }
  return BatchDataset(1, 1, ts, std::move(metric));
}

BatchDataset generate_uniform_dataset(const Environment& env, int n, SeededRng& rng, double lo,
                                      double hi, StateActionMetric metric) {
  if (n < 1) throw InputError("uniform dataset: n must be >= 1");
  if (!(lo < hi)) throw InputError("uniform dataset: need lo < hi");
  std::vector<Transition> ts;
  ts.reserve(n);
  for (int k = 0; k < n; ++k) {
    Transition tr;
    tr.x.resize(env.state_dim());
    tr.u.resize(env.action_dim());
    for (auto& v : tr.x) v = rng.uniform(lo, hi);
    for (auto& v : tr.u) v = rng.uniform(lo, hi);
    auto out = env_step(env, tr.x, tr.u, rng);
    tr.c = out.cost;
    tr.y = std::move(out.next);
    ts.push_back(std::move(tr));
  }
  return BatchDataset(env.state_dim(), env.action_dim(), ts, std::move(metric));
}

// ---------------------------------------------------------------------------

namespace {

double rollout(const Environment& env, const PolicySpec& policy, const Vector& theta, int horizon,
               SeededRng rng) {
  const double gamma = env.gamma();
  Vector x = env.x0();
  double ret = 0.0;
  double discount = 1.0;
  for (int t = 0; t < horizon; ++t) {
    const Vector u = policy.action(theta, x);
    auto out = env_step(env, x, u, rng);
    ret += discount * out.cost;
    discount *= gamma;
    x = std::move(out.next);
  }
  return ret;
}

}  // namespace

OracleResult oracle_return(const Environment& env, const PolicySpec& policy, const Vector& theta,
                           int rollouts, int horizon, SeededRng& rng, int threads) {
  if (rollouts < 1) throw InputError("oracle: rollouts must be >= 1");
  if (horizon < 1) throw InputError("oracle: horizon must be >= 1");
  if (policy.state_dim() != env.state_dim() || policy.action_dim() != env.action_dim()) {
    throw InputError("oracle: policy dimensions do not match the environment");
  }
  policy.check_theta(theta);

  const std::uint64_t base = rng.engine()();
  std::vector<double> returns(rollouts);
  auto work = [&](int begin, int end) {
    for (int r = begin; r < end; ++r) {
      returns[r] = rollout(env, policy, theta, horizon, SeededRng(base, static_cast<std::uint64_t>(r)));
    }
  };
  threads = std::clamp(threads, 1, rollouts);
  if (threads == 1) {
    work(0, rollouts);
  } else {
    std::vector<std::jthread> pool;
    const int chunk = (rollouts + threads - 1) / threads;
    for (int k = 0; k < threads; ++k) {
      const int b = k * chunk;
      const int e = std::min(rollouts, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }

  OracleResult res;
  double sum = 0.0;
  for (double v : returns) sum += v;
  res.mean = sum / rollouts;
  if (rollouts >= 2) {
    double ss = 0.0;
    for (double v : returns) ss += (v - res.mean) * (v - res.mean);
    res.variance = ss / (rollouts - 1);
    res.se = std::sqrt(res.variance / rollouts);
  }
  return res;
}

LipschitzConstants lipschitz_constants(const Environment& env, const PolicySpec& policy,
                                       const Vector& theta) {
  const auto* lab = dynamic_cast<const LipschitzLabEnv*>(&env);
  if (!lab) {
    throw UnsupportedEnvironmentError(
        "lipschitz constants are only known for the Lipschitz-lab environment");
  }
  if (policy.kind() != PolicyKind::Linear) {
    throw UnsupportedEnvironmentError("lipschitz constants require a linear policy");
  }
  policy.check_theta(theta);
  // Induced L1 -> L1 norm: largest column sum of the d_U x d_X gain.
  const int du = policy.action_dim();
  const int dx = policy.state_dim();
  double L_theta = 0.0;
  for (int j = 0; j < dx; ++j) {
    double col = 0.0;
    for (int i = 0; i < du; ++i) col += std::abs(theta[i * dx + j]);
    L_theta = std::max(L_theta, col);
  }
  return {lab->L_f(), lab->L_c(), L_theta};
}

}  // namespace mcps
