#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mcps/errors.hpp"

namespace mcps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

/// Mixes a seed with up to two stream identifiers (SplitMix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b = 0);

/// Deterministic random stream identified by (seed, stream id). Single
/// consumer: parallel work takes distinct stream ids.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  double rademacher();  // +1 or -1, equiprobable

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// State-action metric
// ---------------------------------------------------------------------------

enum class Norm { L1, L2, LInf };

/// Weighted norm on one factor (state or action). Empty weights mean 1.
struct FactorNorm {
  Norm kind = Norm::L1;
  std::vector<double> weights;

  double operator()(std::span<const double> a, std::span<const double> b) const;
};

/// d((x,u),(x',u')) = ||x - x'||_X + ||u - u'||_U.
struct StateActionMetric {
  FactorNorm state;
  FactorNorm action;

  double operator()(std::span<const double> x, std::span<const double> u,
                    std::span<const double> x2, std::span<const double> u2) const {
    return state(x, x2) + action(u, u2);
  }
};

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// ---------------------------------------------------------------------------
// Transitions and datasets
// ---------------------------------------------------------------------------

struct Transition {
  Vector x;
  Vector u;
  double c = 0.0;
  Vector y;
  std::size_t index = 0;  // 1-based position in its dataset
};

/// Immutable batch of one-step transitions F_n. Storage is row-major and
/// contiguous so nearest-neighbour scans stay cache friendly.
class BatchDataset {
 public:
  BatchDataset(int state_dim, int action_dim, const std::vector<Transition>& transitions,
               StateActionMetric metric = {});

  std::size_t size() const noexcept { return costs_.size(); }
  bool empty() const noexcept { return costs_.empty(); }
  int state_dim() const noexcept { return state_dim_; }
  int action_dim() const noexcept { return action_dim_; }
  const StateActionMetric& metric() const noexcept { return metric_; }

  // Zero-based row accessors.
  std::span<const double> state(std::size_t row) const {
    return {states_.data() + row * state_dim_, static_cast<std::size_t>(state_dim_)};
  }
  std::span<const double> action(std::size_t row) const {
    return {actions_.data() + row * action_dim_, static_cast<std::size_t>(action_dim_)};
  }
  std::span<const double> successor(std::size_t row) const {
    return {successors_.data() + row * state_dim_, static_cast<std::size_t>(state_dim_)};
  }
  double cost(std::size_t row) const { return costs_[row]; }
  std::span<const double> costs() const noexcept { return costs_; }

  Transition transition(std::size_t row) const;

  /// Distance from (x, u) to the stored pair at `row`.
  double distance_to(std::size_t row, std::span<const double> x, std::span<const double> u) const {
    return metric_(state(row), action(row), x, u);
  }

  double min_cost() const;
  double max_cost() const;

 private:
  int state_dim_;
  int action_dim_;
  StateActionMetric metric_;
  std::vector<double> states_;
  std::vector<double> actions_;
  std::vector<double> costs_;
  std::vector<double> successors_;
};

/// Distance between two state-action pairs under the dataset's metric.
double metric_distance(const BatchDataset& dataset, const Vector& x_a, const Vector& u_a,
                       const Vector& x_b, const Vector& u_b);

/// CSV with header x_0..,u_0..,c,y_0..; row order defines the index.
void write_dataset_csv(std::ostream& out, const BatchDataset& dataset);
void write_dataset_csv(const std::string& path, const BatchDataset& dataset);
BatchDataset read_dataset_csv(std::istream& in, StateActionMetric metric = {});
BatchDataset read_dataset_csv(const std::string& path, StateActionMetric metric = {});

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// Closed box Theta = prod_i [lower_i, upper_i].
struct ParameterBox {
  Vector lower;
  Vector upper;

  static ParameterBox uniform(int dim, double lo, double hi);
  static ParameterBox unbounded(int dim);

  int dim() const noexcept { return static_cast<int>(lower.size()); }
  bool contains(const Vector& theta) const;
  ParameterBox widened(double margin) const;
  void validate() const;
};

enum class PolicyKind { Linear, Affine, FeatureMap };

/// Deterministic policy u = Theta * phi(x), with Theta the d_U x k matrix
/// stored row-major in theta. Linear uses phi(x) = x, affine phi(x) = [x; 1].
class PolicySpec {
 public:
  using FeatureFn = std::function<Vector(const Vector&)>;

  static PolicySpec linear(int state_dim, int action_dim, ParameterBox box);
  static PolicySpec affine(int state_dim, int action_dim, ParameterBox box);
  static PolicySpec feature_map(int state_dim, int action_dim, int features, FeatureFn phi,
                                ParameterBox box);

  PolicyKind kind() const noexcept { return kind_; }
  int param_dim() const noexcept { return action_dim_ * features_; }
  int state_dim() const noexcept { return state_dim_; }
  int action_dim() const noexcept { return action_dim_; }
  const ParameterBox& box() const noexcept { return box_; }

  PolicySpec with_box(ParameterBox box) const;

  /// Throws InputError when theta is outside the box or has the wrong size.
  Vector action(const Vector& theta, const Vector& x) const;
  void check_theta(const Vector& theta) const;

 private:
  PolicySpec(PolicyKind kind, int state_dim, int action_dim, int features, FeatureFn phi,
             ParameterBox box);

  Vector features_of(const Vector& x) const;

  PolicyKind kind_;
  int state_dim_;
  int action_dim_;
  int features_;
  FeatureFn phi_;
  ParameterBox box_;
};

/// Free-function form of PolicySpec::action.
inline Vector policy_action(const PolicySpec& policy, const Vector& theta, const Vector& x) {
  return policy.action(theta, x);
}

}  // namespace mcps
