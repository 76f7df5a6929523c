#pragma once

#include <atomic>
#include <functional>
#include <optional>

#include "mcps/core.hpp"

namespace mcps {

/// One policy-evaluation reading: J estimate and, when available, the
/// variance estimate of the return.
struct Evaluation {
  double j = 0.0;
  std::optional<double> v;
};

/// theta -> estimate of J^theta(x0). Implementations are deterministic for a
/// fixed instance and safe to call concurrently.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Evaluation evaluate(const Vector& theta) const = 0;
};

/// Wraps an analytic function (and optionally an analytic variance).
class FunctionEvaluator final : public Evaluator {
 public:
  using Fn = std::function<double(const Vector&)>;

  explicit FunctionEvaluator(Fn j, Fn v = nullptr) : j_(std::move(j)), v_(std::move(v)) {}

  Evaluation evaluate(const Vector& theta) const override {
    Evaluation e{j_(theta), std::nullopt};
    if (v_) e.v = v_(theta);
    return e;
  }

 private:
  Fn j_;
  Fn v_;
};

/// Forwards to another evaluator and counts calls.
class CountingEvaluator final : public Evaluator {
 public:
  explicit CountingEvaluator(const Evaluator& inner) : inner_(inner) {}

  Evaluation evaluate(const Vector& theta) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.evaluate(theta);
  }

  long calls() const noexcept { return calls_.load(); }
  void reset() noexcept { calls_ = 0; }

 private:
  const Evaluator& inner_;
  mutable std::atomic<long> calls_{0};
};

}  // namespace mcps
