#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcps/core.hpp"
#include "mcps/evaluator.hpp"
#include "mcps/perturb.hpp"

namespace mcps {

// ---------------------------------------------------------------------------
// Step sizes
// ---------------------------------------------------------------------------

/// a(t) = a0 / t^kappa with kappa in (0.5, 1], so that sum a(t) diverges and
/// sum a(t)^2 converges. Harmonic is kappa = 1. t is 1-based.
struct StepSchedule {
  enum class Kind { Harmonic, PowerLaw };

  Kind kind = Kind::Harmonic;
  double a0 = 1.0;
  double kappa = 1.0;

  static StepSchedule harmonic(double a0 = 1.0) { return {Kind::Harmonic, a0, 1.0}; }
  static StepSchedule power_law(double a0, double kappa) { return {Kind::PowerLaw, a0, kappa}; }

  double operator()(long t) const;
  void validate() const;
};

/// True when slow(t) / fast(t) -> 0 by construction (larger exponent), or the
/// exponents agree and slow has the smaller scale.
bool timescales_separated(const StepSchedule& fast, const StepSchedule& slow);

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

/// Componentwise clamp onto the box.
Vector project_box(const Vector& theta, const ParameterBox& box);

/// Symmetrize, then clamp eigenvalues to [omega, inf). In 1-D: max(h, omega).
Matrix project_psd(const Matrix& H, double omega);

/// Inverse of project_psd(H, omega) computed from the same eigendecomposition.
Matrix projected_inverse(const Matrix& H, double omega);

/// Acts on an inverse-Hessian estimate M the way project_psd acts on H = M^{-1}:
/// eigenvalues outside (0, 1/omega] are replaced by 1/omega.
Matrix project_inverse(const Matrix& M, double omega);

double min_eigenvalue(const Matrix& S);

/// Rank-one inverse update
///   M/(1-a) [I - C U V^T M / (1 - b + C V^T M U)].
/// With b = a this is the exact inverse of (1-a) M^{-1} + C U V^T.
/// Throws DegenerateUpdateError when 1 - a or the denominator is within 1e-10 of zero.
Matrix woodbury_update(const Matrix& M, double a, double b, double C, const Vector& U,
                       const Vector& V);

// ---------------------------------------------------------------------------
// Optimizer state and single steps
// ---------------------------------------------------------------------------

/// Lagrange multiplier settings of the variance-constrained variants.
struct RiskConfig {
  double alpha = 1.0;       // variance cap
  double lambda_max = 10.0;
  double lambda0 = 0.0;
  StepSchedule b_schedule = StepSchedule::harmonic(0.1);  // slow timescale

  void validate(const StepSchedule& fast) const;
};

struct StepConfig {
  double delta = 0.1;
  StepSchedule schedule;
  ParameterBox box = ParameterBox::uniform(1, 0.0, 1.0);
  double omega = 0.1;
  bool sf_literal_scaling = false;
  std::optional<StepSchedule> woodbury_b;  // defaults to `schedule`
  RiskConfig risk;

  void validate() const;
};

struct OptimizerState {
  long t = 1;  // index of the next iteration
  Vector theta;
  Vector theta_bar;  // running mean of all iterates so far, initial one included
  Matrix H;          // Hessian estimate (Newton variants)
  Matrix M;          // inverse of the projected Hessian
  double lambda = 0.0;
  SeededRng rng;

  static OptimizerState initial(const Vector& theta0, const StepConfig& cfg, SeededRng rng,
                                std::optional<double> woodbury_k = std::nullopt);

  /// Iteration that failed: the iterate is kept, the counter and average advance.
  void advance_unchanged();
};

/// Readings gathered during one step, for tracing.
struct StepRecord {
  double j_plus = 0.0;
  double j_minus = 0.0;
  double h_min_eig = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> v_nominal;
};

/// First-order step theta <- Gamma(theta - a(t) g), g from SPSA (Rademacher)
/// or SF (Gaussian). Two evaluator calls.
StepRecord mcpg_step(OptimizerState& state, const Evaluator& eval, PerturbationKind kind,
                     const StepConfig& cfg);

/// Newton step: H <- H + a(t)(H_sample - H), M = project_psd(H)^{-1},
/// theta <- Gamma(theta - a(t) M g). Four evaluator calls.
StepRecord mcpn_step(OptimizerState& state, const Evaluator& eval, PerturbationKind kind,
                     const StepConfig& cfg);

/// Newton step that maintains M through woodbury_update. Four evaluator calls.
StepRecord woodbury_step(OptimizerState& state, const Evaluator& eval, const StepConfig& cfg);

/// Two-timescale variance-constrained MCPG: theta descends the SPSA gradient
/// of J + lambda V on a(t); lambda ascends V(theta) - alpha on b(t), clamped
/// to [0, lambda_max]. Three evaluator calls.
StepRecord risk_mcpg_step(OptimizerState& state, const Evaluator& eval, const StepConfig& cfg);

/// Newton counterpart of risk_mcpg_step. Five evaluator calls.
StepRecord risk_mcpn_step(OptimizerState& state, const Evaluator& eval, const StepConfig& cfg);

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

enum class Algorithm { McpgSpsa, McpgSf, McpnSpsa, McpnSf, McpnWoodbury, RiskMcpg, RiskMcpn };

std::string_view algorithm_name(Algorithm alg);
Algorithm parse_algorithm(std::string_view name);
const std::vector<Algorithm>& all_algorithms();

/// Evaluator calls one iteration of `alg` makes.
int calls_per_iteration(Algorithm alg);

/// Perturbation distribution used by `alg`.
PerturbationKind perturbation_kind(Algorithm alg);

/// How far outside the box the evaluator must accept parameters: 2*delta for
/// Rademacher perturbations (the Hessian point theta + delta*Delta + delta*DeltaHat),
/// unbounded for Gaussian ones.
double evaluation_margin(Algorithm alg, double delta);

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::McpgSpsa;
  StepConfig step;
  std::uint64_t seed = 0;
  std::optional<Vector> theta0;           // default: uniform draw from the box
  std::optional<double> woodbury_k;       // M(0) = k I, default 1 / omega
  int error_budget = 10;
};

struct TraceRow {
  long t = 0;
  Vector theta;      // iterate after step t
  Vector theta_bar;  // mean of the initial iterate and the first t updates
  double j_plus = 0.0;
  double j_minus = 0.0;
  double lambda = 0.0;
  double h_min_eig = 0.0;
  bool ok = true;
};

struct Trace {
  Algorithm algorithm = Algorithm::McpgSpsa;
  std::uint64_t seed = 0;
  Vector theta0;
  std::vector<TraceRow> rows;
  int failed_steps = 0;
};

/// Draws theta(0) uniformly from the box on the seed's initialization stream.
Vector initial_theta(const ParameterBox& box, std::uint64_t seed);

/// Iterates the selected step. Failed steps leave theta unchanged and are
/// counted; more than `error_budget` failures abort with the last error.
Trace run_optimizer(const OptimizerConfig& config, const Evaluator& eval, int iterations);

/// `t,theta_0..,theta_bar_0..,j_plus,j_minus,lambda,h_min_eig` after a `#` header line.
void write_trace_csv(std::ostream& out, const Trace& trace);

}  // namespace mcps
