#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mcps/core.hpp"
#include "mcps/evaluator.hpp"

namespace mcps {

struct MfmcConfig {
  int p = 1;             // artificial trajectories
  int T = 1;             // truncation horizon
  double gamma = 0.95;   // discount factor, in (0, 1)
  Vector x0;             // initial state

  /// ceil(1 / (1 - gamma)), guarded against round-off (0.95 gives 20, not 21).
  static int default_horizon(double gamma);
  /// ceil(ln(n / T)) clamped to [1, floor(n / T)].
  static int default_trajectories(std::size_t n, int T);

  void validate() const;
};

/// Output of one MFMC evaluation. Trajectory-major: selected_indices[i][t] is
/// the 1-based dataset index used at step t of artificial trajectory i.
struct MfmcReport {
  double j_hat = 0.0;
  std::vector<double> trajectory_returns;
  std::optional<double> v_hat;  // present when p >= 2
  std::vector<std::vector<std::size_t>> selected_indices;
  std::vector<std::vector<double>> distances;  // psi^i_t
  std::vector<std::vector<double>> costs;

  int p() const noexcept { return static_cast<int>(trajectory_returns.size()); }
  int T() const noexcept {
    return selected_indices.empty() ? 0 : static_cast<int>(selected_indices.front().size());
  }
};

/// Rebuilds p artificial trajectories of length T by greedy nearest-neighbour
/// stitching. Each transition is consumed at most once; ties go to the lowest
/// dataset index. Pure and deterministic.
MfmcReport mfmc_estimate(const BatchDataset& dataset, const PolicySpec& policy, const Vector& theta,
                         const MfmcConfig& cfg);

/// Unbiased sample variance of the trajectory returns (1 / (p - 1)).
double mfmc_variance(const MfmcReport& report);

/// +inf when the fraction of trajectories whose return exceeds `b` is
/// strictly greater than `c`; otherwise j_hat.
double mfmc_var_criterion(const MfmcReport& report, double b, double c);

/// Writes `trajectory,step,index,cost,distance` rows followed by a `#` summary line.
void write_report_csv(std::ostream& out, const MfmcReport& report);

// ---------------------------------------------------------------------------
// Coverage and bias diagnostics
// ---------------------------------------------------------------------------

/// A state-action probe point.
struct Probe {
  Vector x;
  Vector u;
};

/// Max over probes of the distance to the k-th nearest stored pair. The true
/// k-dispersion is a supremum over the whole space, so this is a lower
/// estimate whose quality depends on the probe set.
double dispersion(const BatchDataset& dataset, int k, const std::vector<Probe>& probes);

/// The dataset's own pairs plus, when d_X + d_U <= 2, a uniform grid with
/// `grid_points` per axis over the bounding box of the stored pairs.
std::vector<Probe> default_probes(const BatchDataset& dataset, int grid_points = 101);

struct LipschitzConstants {
  double L_f = 0.0;
  double L_c = 0.0;
  double L_theta = 0.0;
};

/// L_Q = L_c / (1 - gamma L_f (1 + L_theta)); DomainError unless the
/// contraction gamma L_f (1 + L_theta) < 1 holds.
double q_lipschitz(const LipschitzConstants& lc, double gamma);

/// C^theta = L_Q * sum_{t<T} gamma^t.
double bias_constant(const LipschitzConstants& lc, double gamma, int T);

/// Expected-bias bound C^theta alpha_pT + gamma^T / (1 - gamma).
double bias_bound(const LipschitzConstants& lc, double gamma, int T, double alpha_pT);

/// High-probability bound: bias_bound * sqrt(2 ln(2 / eta) / p), valid with
/// probability at least 1 - eta.
double hp_bound(const LipschitzConstants& lc, double gamma, int T, double alpha_pT, int p,
                double eta);

// ---------------------------------------------------------------------------

/// Evaluator backed by MFMC on a fixed dataset. The policy box is widened by
/// `margin` so perturbed parameters theta +/- delta*Delta are admissible.
class MfmcEvaluator final : public Evaluator {
 public:
  MfmcEvaluator(const BatchDataset& dataset, const PolicySpec& policy, MfmcConfig cfg,
                double margin = 0.0);

  Evaluation evaluate(const Vector& theta) const override;
  MfmcReport report(const Vector& theta) const;

  const MfmcConfig& config() const noexcept { return cfg_; }

 private:
  const BatchDataset& dataset_;
  PolicySpec policy_;
  MfmcConfig cfg_;
};

}  // namespace mcps
