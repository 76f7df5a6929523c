#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mcps/bench.hpp"
#include "mcps/optim.hpp"

namespace mcps {

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  int n_datasets = 50;
  int iterations = 500;
  std::vector<Algorithm> algorithms{Algorithm::McpgSpsa, Algorithm::McpgSf, Algorithm::McpnSpsa,
                                    Algorithm::McpnSf};
  double delta = 0.1;
  StepSchedule schedule;  // a(t) = 1/t
  double lower = 0.0;     // parameter box (1-D benchmark policy)
  double upper = 1.0;
  double omega = 0.1;
  bool sf_literal_scaling = false;
  RiskConfig risk;
  std::optional<double> theta0;  // default: uniform draw per dataset seed
  std::uint64_t seed = 1;

  // Environment and dataset.
  double epsilon = 0.01;
  double gamma = 0.95;
  double x0 = -1.0;
  int n = 200;
  std::optional<int> p;  // default ceil(ln(n/T))
  std::optional<int> T;  // default ceil(1/(1-gamma))

  int threads = 0;  // 0: hardware concurrency
  std::string output_dir;  // empty: nothing written

  void validate() const;
};

std::string to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

struct AggregateRow {
  long t = 0;
  double theta_mean = 0.0;
  double theta_sd = 0.0;
  double theta_ci = 0.0;
  double theta_bar_mean = 0.0;
  double theta_bar_sd = 0.0;
  double theta_bar_ci = 0.0;
};

/// Per-iteration statistics of theta across successful runs of one algorithm.
/// ci is 1.96 sd / sqrt(runs); with a single run it is reported as 0 and
/// ci_valid is false.
struct AggregateTrace {
  Algorithm algorithm = Algorithm::McpgSpsa;
  int runs = 0;
  bool ci_valid = false;
  std::vector<AggregateRow> rows;
};

struct RunResult {
  Algorithm algorithm = Algorithm::McpgSpsa;
  int dataset = 0;
  bool ok = false;
  std::string error;
  Trace trace;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunResult> runs;  // algorithm-major, then dataset
  std::vector<AggregateTrace> aggregates;
  std::vector<std::string> warnings;
  long evaluator_calls = 0;
};

/// Seed of the i-th dataset's disturbance stream and of its optimizer runs.
std::uint64_t dataset_seed(std::uint64_t master, int dataset);
std::uint64_t run_seed(std::uint64_t master, int dataset);

BatchDataset experiment_dataset(const ExperimentConfig& cfg, int dataset);
MfmcConfig experiment_mfmc_config(const ExperimentConfig& cfg, std::size_t n);

AggregateTrace aggregate(Algorithm alg, const std::vector<const Trace*>& traces);

/// Runs every (dataset, algorithm) pair on a worker pool and aggregates.
/// Failed runs are excluded with a warning; fewer than 80% successes for an
/// algorithm is an error.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

void write_aggregate_csv(std::ostream& out, const AggregateTrace& agg);

// ---------------------------------------------------------------------------
// Ground-truth sweep
// ---------------------------------------------------------------------------

struct SweepConfig {
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.01;
  int rollouts = 10000;
  int horizon = 200;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct SweepRow {
  double theta = 0.0;
  OracleResult oracle;
};

/// Every theta uses the same rollout streams (common random numbers).
std::vector<SweepRow> oracle_sweep(const Environment& env, const SweepConfig& cfg);
std::size_t sweep_argmin(const std::vector<SweepRow>& rows);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// "lo:hi:step" -> sweep limits.
void parse_grid(const std::string& spec, SweepConfig& cfg);

// ---------------------------------------------------------------------------
// High-probability bound coverage on the Lipschitz lab
// ---------------------------------------------------------------------------

struct BoundsConfig {
  int datasets = 100;
  int n = 400;
  double eta = 0.05;
  double theta = 0.5;
  std::optional<int> p;
  std::optional<int> T;
  int oracle_rollouts = 20000;
  int oracle_horizon = 200;
  int grid_points = 101;
  std::uint64_t seed = 1;
  LipschitzLabEnv::Params env;
};

struct BoundsRow {
  double j_hat = 0.0;
  double error = 0.0;  // |j_hat - j_oracle|
  double alpha = 0.0;  // dispersion estimate alpha_pT
  double bound = 0.0;
  bool covered = false;
};

struct BoundsReport {
  double j_oracle = 0.0;
  double oracle_se = 0.0;
  int p = 0;
  int T = 0;
  LipschitzConstants constants;
  std::vector<BoundsRow> rows;

  int covered() const;
  double coverage() const;
};

BoundsReport bounds_check(const BoundsConfig& cfg);
void write_bounds_csv(std::ostream& out, const BoundsReport& report);

// ---------------------------------------------------------------------------

/// Command-line entry point. 0 success, 1 usage error, 2 runtime error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mcps
