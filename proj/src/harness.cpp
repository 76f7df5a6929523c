#include "mcps/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcps/csv.hpp"

namespace mcps {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (n_datasets < 1) throw InputError("experiment: n_datasets must be >= 1");
  if (iterations < 1) throw InputError("experiment: iterations must be >= 1");
  if (algorithms.empty()) throw InputError("experiment: no algorithms selected");
  if (!(lower <= upper) || !std::isfinite(lower) || !std::isfinite(upper)) {
    throw InputError("experiment: invalid parameter box");
  }
  if (theta0 && !(*theta0 >= lower && *theta0 <= upper)) {
    throw InputError("experiment: theta0 outside the box");
  }
  if (n < 4) throw InputError("experiment: n must be >= 4");
  if (threads < 0) throw InputError("experiment: threads must be >= 0");
  StepConfig step;
  step.delta = delta;
  step.schedule = schedule;
  step.omega = omega;
  step.box = ParameterBox::uniform(1, lower, upper);
  step.validate();
  for (Algorithm a : algorithms) {
    if (a == Algorithm::RiskMcpg || a == Algorithm::RiskMcpn) {
      risk.validate(schedule);
      if (p && *p < 2) throw InputError("experiment: risk variants need p >= 2");
    }
  }
  SincEnv(epsilon, gamma, x0);
}

namespace {

json schedule_json(const StepSchedule& s) {
  return {{"a0", s.a0}, {"kappa", s.kappa}};
}

StepSchedule schedule_from(const json& j) {
  const double a0 = j.value("a0", 1.0);
  const double kappa = j.value("kappa", 1.0);
  return kappa == 1.0 ? StepSchedule::harmonic(a0) : StepSchedule::power_law(a0, kappa);
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> optional_from(const json& j, const char* key, std::optional<T> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string to_json(const ExperimentConfig& cfg) {
  json algs = json::array();
  for (Algorithm a : cfg.algorithms) algs.push_back(std::string(algorithm_name(a)));
  json j = {
      {"n_datasets", cfg.n_datasets},
      {"iterations", cfg.iterations},
      {"algorithms", algs},
      {"delta", cfg.delta},
      {"schedule", schedule_json(cfg.schedule)},
      {"box", {cfg.lower, cfg.upper}},
      {"omega", cfg.omega},
      {"sf_literal_scaling", cfg.sf_literal_scaling},
      {"risk",
       {{"alpha", cfg.risk.alpha},
        {"lambda_max", cfg.risk.lambda_max},
        {"lambda0", cfg.risk.lambda0},
        {"b_schedule", schedule_json(cfg.risk.b_schedule)}}},
      {"theta0", optional_json(cfg.theta0)},
      {"seed", cfg.seed},
      {"epsilon", cfg.epsilon},
      {"gamma", cfg.gamma},
      {"x0", cfg.x0},
      {"n", cfg.n},
      {"p", optional_json(cfg.p)},
      {"T", optional_json(cfg.T)},
      {"threads", cfg.threads},
  };
  return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  static const std::vector<std::string> known{
      "n_datasets", "iterations", "algorithms", "delta", "schedule", "box", "omega",
      "sf_literal_scaling", "risk", "theta0", "seed", "epsilon", "gamma", "x0", "n", "p", "T",
      "threads", "output_dir"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("config: unknown field '" + key + "'");
    }
  }

  ExperimentConfig cfg;
  try {
    cfg.n_datasets = j.value("n_datasets", cfg.n_datasets);
    cfg.iterations = j.value("iterations", cfg.iterations);
    if (j.contains("algorithms")) {
      cfg.algorithms.clear();
      for (const auto& a : j.at("algorithms")) cfg.algorithms.push_back(parse_algorithm(a.get<std::string>()));
    }
    cfg.delta = j.value("delta", cfg.delta);
    if (j.contains("schedule")) cfg.schedule = schedule_from(j.at("schedule"));
    if (j.contains("box")) {
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 2) throw InputError("config: box must be [lower, upper]");
      cfg.lower = b[0].get<double>();
      cfg.upper = b[1].get<double>();
    }
    cfg.omega = j.value("omega", cfg.omega);
    cfg.sf_literal_scaling = j.value("sf_literal_scaling", cfg.sf_literal_scaling);
    if (j.contains("risk")) {
      const auto& r = j.at("risk");
      cfg.risk.alpha = r.value("alpha", cfg.risk.alpha);
      cfg.risk.lambda_max = r.value("lambda_max", cfg.risk.lambda_max);
      cfg.risk.lambda0 = r.value("lambda0", cfg.risk.lambda0);
      if (r.contains("b_schedule")) cfg.risk.b_schedule = schedule_from(r.at("b_schedule"));
    }
    cfg.theta0 = optional_from<double>(j, "theta0", cfg.theta0);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.x0 = j.value("x0", cfg.x0);
    cfg.n = j.value("n", cfg.n);
    cfg.p = optional_from<int>(j, "p", cfg.p);
    cfg.T = optional_from<int>(j, "T", cfg.T);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

std::uint64_t dataset_seed(std::uint64_t master, int dataset) {
  return derive_seed(master, 0xDA7A, static_cast<std::uint64_t>(dataset));
}

std::uint64_t run_seed(std::uint64_t master, int dataset) {
  return derive_seed(master, 0x0B7, static_cast<std::uint64_t>(dataset));
}

BatchDataset experiment_dataset(const ExperimentConfig& cfg, int dataset) {
  const SincEnv env(cfg.epsilon, cfg.gamma, cfg.x0);
  SeededRng rng(dataset_seed(cfg.seed, dataset), 0);
  return generate_grid_dataset(env, cfg.n, rng);
}

MfmcConfig experiment_mfmc_config(const ExperimentConfig& cfg, std::size_t n) {
  MfmcConfig m;
  m.gamma = cfg.gamma;
  m.T = cfg.T.value_or(MfmcConfig::default_horizon(cfg.gamma));
  m.p = cfg.p.value_or(MfmcConfig::default_trajectories(n, m.T));
  m.x0 = Vector::Constant(1, cfg.x0);
  return m;
}

namespace {

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  sd = 0.0;
  if (v.size() < 2) return;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

AggregateTrace aggregate(Algorithm alg, const std::vector<const Trace*>& traces) {
  AggregateTrace agg;
  agg.algorithm = alg;
  agg.runs = static_cast<int>(traces.size());
  agg.ci_valid = agg.runs >= 2;
  if (traces.empty()) return agg;
  const std::size_t len = traces.front()->rows.size();
  for (const Trace* tr : traces) {
    if (tr->rows.size() != len) throw InputError("aggregate: traces differ in length");
    if (tr->theta0.size() != 1) throw InputError("aggregate: only 1-D parameters are supported");
  }
  const double scale = agg.ci_valid ? 1.96 / std::sqrt(static_cast<double>(agg.runs)) : 0.0;
  std::vector<double> theta(traces.size()), bar(traces.size());
  agg.rows.resize(len);
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t r = 0; r < traces.size(); ++r) {
      theta[r] = traces[r]->rows[k].theta[0];
      bar[r] = traces[r]->rows[k].theta_bar[0];
    }
    AggregateRow& row = agg.rows[k];
    row.t = traces.front()->rows[k].t;
    mean_sd(theta, row.theta_mean, row.theta_sd);
    mean_sd(bar, row.theta_bar_mean, row.theta_bar_sd);
    row.theta_ci = scale * row.theta_sd;
    row.theta_bar_ci = scale * row.theta_bar_sd;
  }
  return agg;
}

void write_aggregate_csv(std::ostream& out, const AggregateTrace& agg) {
  csv::write_row(out, {"t", "theta_mean", "theta_sd", "theta_ci", "theta_bar_mean", "theta_bar_sd",
                       "theta_bar_ci", "runs", "ci_valid"});
  for (const auto& r : agg.rows) {
    csv::write_row(out, {std::to_string(r.t), csv::format(r.theta_mean), csv::format(r.theta_sd),
                         csv::format(r.theta_ci), csv::format(r.theta_bar_mean),
                         csv::format(r.theta_bar_sd), csv::format(r.theta_bar_ci),
                         std::to_string(agg.runs), agg.ci_valid ? "1" : "0"});
  }
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) fn(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.config = cfg;

  std::vector<BatchDataset> datasets;
  datasets.reserve(cfg.n_datasets);
  for (int i = 0; i < cfg.n_datasets; ++i) datasets.push_back(experiment_dataset(cfg, i));
  const MfmcConfig mcfg = experiment_mfmc_config(cfg, datasets.front().size());
  const PolicySpec policy = PolicySpec::linear(1, 1, ParameterBox::uniform(1, cfg.lower, cfg.upper));

  const std::size_t n_alg = cfg.algorithms.size();
  result.runs.resize(n_alg * cfg.n_datasets);
  std::atomic<long> calls{0};

  parallel_for(result.runs.size(), cfg.threads, [&](std::size_t k) {
    RunResult& run = result.runs[k];
    run.algorithm = cfg.algorithms[k / cfg.n_datasets];
    run.dataset = static_cast<int>(k % cfg.n_datasets);

    OptimizerConfig oc;
    oc.algorithm = run.algorithm;
    oc.seed = run_seed(cfg.seed, run.dataset);
    oc.step.delta = cfg.delta;
    oc.step.schedule = cfg.schedule;
    oc.step.box = policy.box();
    oc.step.omega = cfg.omega;
    oc.step.sf_literal_scaling = cfg.sf_literal_scaling;
    oc.step.risk = cfg.risk;
    if (cfg.theta0) oc.theta0 = Vector::Constant(1, *cfg.theta0);

    const MfmcEvaluator mfmc(datasets[run.dataset], policy, mcfg,
                             evaluation_margin(run.algorithm, cfg.delta));
    const CountingEvaluator counted(mfmc);
    try {
      run.trace = run_optimizer(oc, counted, cfg.iterations);
      run.ok = true;
    } catch (const std::exception& e) {
      run.ok = false;
      run.error = e.what();
    }
    calls += counted.calls();
  });
  result.evaluator_calls = calls.load();

  for (std::size_t a = 0; a < n_alg; ++a) {
    const Algorithm alg = cfg.algorithms[a];
    std::vector<const Trace*> ok;
    for (int i = 0; i < cfg.n_datasets; ++i) {
      const RunResult& run = result.runs[a * cfg.n_datasets + i];
      if (run.ok) {
        ok.push_back(&run.trace);
      } else {
        result.warnings.push_back(std::string(algorithm_name(alg)) + " dataset " +
                                  std::to_string(i) + " failed: " + run.error);
      }
    }
    if (ok.size() * 5 < static_cast<std::size_t>(cfg.n_datasets) * 4) {
      throw std::runtime_error(std::string("experiment: only ") + std::to_string(ok.size()) + " of " +
                               std::to_string(cfg.n_datasets) + " runs of " +
                               std::string(algorithm_name(alg)) + " succeeded");
    }
    result.aggregates.push_back(aggregate(alg, ok));
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';

  if (!cfg.output_dir.empty()) {
    const fs::path root(cfg.output_dir);
    fs::create_directories(root / "aggregate");
    write_file(root / "config.json", to_json(cfg) + "\n");
    for (const auto& run : result.runs) {
      if (!run.ok) continue;
      const fs::path dir = root / "runs" / std::string(algorithm_name(run.algorithm));
      fs::create_directories(dir);
      std::ostringstream name;
      name << std::setw(3) << std::setfill('0') << run.dataset << ".csv";
      std::ostringstream body;
      write_trace_csv(body, run.trace);
      write_file(dir / name.str(), body.str());
    }
    for (const auto& agg : result.aggregates) {
      std::ostringstream body;
      write_aggregate_csv(body, agg);
      write_file(root / "aggregate" / (std::string(algorithm_name(agg.algorithm)) + ".csv"), body.str());
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Oracle sweep
// ---------------------------------------------------------------------------

void parse_grid(const std::string& spec, SweepConfig& cfg) {
  const auto parts = csv::split(spec, ':');
  if (parts.size() != 3) throw InputError("grid must be lo:hi:step");
  cfg.lo = csv::parse_double(parts[0]);
  cfg.hi = csv::parse_double(parts[1]);
  cfg.step = csv::parse_double(parts[2]);
}

std::vector<SweepRow> oracle_sweep(const Environment& env, const SweepConfig& cfg) {
  if (!(cfg.step > 0.0) || !(cfg.lo <= cfg.hi)) throw InputError("sweep: need lo <= hi and step > 0");
  if (env.state_dim() != 1 || env.action_dim() != 1) throw InputError("sweep: 1-D environments only");
  const long count = std::lround(std::floor((cfg.hi - cfg.lo) / cfg.step + 1e-9)) + 1;
  const PolicySpec policy = PolicySpec::linear(1, 1, ParameterBox::unbounded(1));
  std::vector<SweepRow> rows(count);
  for (long k = 0; k < count; ++k) {
    rows[k].theta = std::min(cfg.hi, cfg.lo + static_cast<double>(k) * cfg.step);
    SeededRng rng(cfg.seed, 0);
    rows[k].oracle = oracle_return(env, policy, Vector::Constant(1, rows[k].theta), cfg.rollouts,
                                   cfg.horizon, rng, cfg.threads);
  }
  return rows;
}

std::size_t sweep_argmin(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw InputError("sweep: no rows");
  std::size_t best = 0;
  for (std::size_t k = 1; k < rows.size(); ++k)
    if (rows[k].oracle.mean < rows[best].oracle.mean) best = k;
  return best;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  csv::write_row(out, {"theta", "j_mean", "j_var", "se"});
  for (const auto& r : rows) {
    csv::write_row(out, {csv::format(r.theta), csv::format(r.oracle.mean),
                         csv::format(r.oracle.variance), csv::format(r.oracle.se)});
  }
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

int BoundsReport::covered() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const BoundsRow& r) { return r.covered; }));
}

double BoundsReport::coverage() const {
  return rows.empty() ? 0.0 : static_cast<double>(covered()) / static_cast<double>(rows.size());
}

BoundsReport bounds_check(const BoundsConfig& cfg) {
  if (cfg.datasets < 1) throw InputError("bounds: datasets must be >= 1");
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0)) throw InputError("bounds: eta must be in (0, 1)");
  const LipschitzLabEnv env(cfg.env);
  const Vector theta = Vector::Constant(1, cfg.theta);
  const PolicySpec policy = PolicySpec::linear(1, 1, ParameterBox::unbounded(1));

  BoundsReport report;
  report.constants = lipschitz_constants(env, policy, theta);
  q_lipschitz(report.constants, env.gamma());  // domain error if the contraction fails

  SeededRng oracle_rng(cfg.seed, 1);
  const auto oracle = oracle_return(env, policy, theta, cfg.oracle_rollouts, cfg.oracle_horizon, oracle_rng);
  report.j_oracle = oracle.mean;
  report.oracle_se = oracle.se;

  std::vector<BatchDataset> datasets;
  for (int i = 0; i < cfg.datasets; ++i) {
    SeededRng rng(derive_seed(cfg.seed, 0xB0D, static_cast<std::uint64_t>(i)), 0);
    datasets.push_back(generate_grid_dataset(env, cfg.n, rng));
  }
  MfmcConfig mcfg;
  mcfg.gamma = env.gamma();
  mcfg.x0 = env.x0();
  mcfg.T = cfg.T.value_or(MfmcConfig::default_horizon(env.gamma()));
  mcfg.p = cfg.p.value_or(MfmcConfig::default_trajectories(datasets.front().size(), mcfg.T));
  report.p = mcfg.p;
  report.T = mcfg.T;
  const int k = mcfg.p * mcfg.T;

  for (const auto& ds : datasets) {
    BoundsRow row;
    row.j_hat = mfmc_estimate(ds, policy, theta, mcfg).j_hat;
    row.error = std::abs(row.j_hat - report.j_oracle);
    row.alpha = dispersion(ds, k, default_probes(ds, cfg.grid_points));
    row.bound = hp_bound(report.constants, env.gamma(), mcfg.T, row.alpha, mcfg.p, cfg.eta);
    row.covered = row.error <= row.bound;
    report.rows.push_back(row);
  }
  return report;
}

void write_bounds_csv(std::ostream& out, const BoundsReport& report) {
  csv::write_row(out, {"dataset", "j_hat", "j_oracle", "error", "alpha", "bound", "covered"});
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    csv::write_row(out, {std::to_string(i), csv::format(r.j_hat), csv::format(report.j_oracle),
                         csv::format(r.error), csv::format(r.alpha), csv::format(r.bound),
                         r.covered ? "1" : "0"});
  }
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  fn(f);
}

std::unique_ptr<Environment> make_env(const std::string& kind, double epsilon, double gamma, double x0) {
  if (kind == "sinc") return std::make_unique<SincEnv>(epsilon, gamma, x0);
  if (kind == "lab") {
    LipschitzLabEnv::Params p;
    p.gamma = gamma;
    p.x0 = x0;
    return std::make_unique<LipschitzLabEnv>(p);
  }
  throw UsageError("unknown environment '" + kind + "' (sinc, lab)");
}

std::vector<Algorithm> parse_algorithm_list(const std::vector<std::string>& names) {
  std::vector<Algorithm> algs;
  for (const auto& n : names) {
    for (const auto& part : csv::split(n, ',')) {
      if (!part.empty()) algs.push_back(parse_algorithm(part));
    }
  }
  return algs;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Batch policy search with model-free Monte Carlo evaluation", "mcps"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a transition dataset");
  std::string gen_env = "sinc", gen_layout = "grid", gen_out;
  int gen_n = 200;
  std::uint64_t gen_seed = 1;
  double gen_eps = 0.01;
  gen->add_option("--env", gen_env, "sinc or lab")->capture_default_str();
  gen->add_option("--layout", gen_layout, "grid or uniform")->capture_default_str();
  gen->add_option("--n", gen_n, "Target dataset size")->capture_default_str();
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--epsilon", gen_eps, "Disturbance width (sinc)")->capture_default_str();
  gen->add_option("--out,-o", gen_out, "Output CSV (default stdout)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "MFMC estimate of J for given parameters");
  std::string ev_data, ev_out;
  std::vector<double> ev_theta, ev_x0{-1.0};
  std::optional<int> ev_p, ev_T;
  double ev_gamma = 0.95;
  std::optional<double> ev_b, ev_c;
  ev->add_option("--dataset", ev_data)->required();
  ev->add_option("--theta", ev_theta, "Policy parameters (row-major gain)")->required();
  ev->add_option("--p", ev_p, "Artificial trajectories (default ceil(ln(n/T)))");
  ev->add_option("--T", ev_T, "Horizon (default ceil(1/(1-gamma)))");
  ev->add_option("--gamma", ev_gamma)->capture_default_str();
  ev->add_option("--x0", ev_x0)->capture_default_str();
  ev->add_option("--indices-out", ev_out, "Selected transitions CSV")->capture_default_str();
  ev->add_option("--var-b", ev_b, "Cost threshold of the VaR-like criterion");
  ev->add_option("--var-c", ev_c, "Tolerated exceedance fraction of the VaR-like criterion");

  // oracle-sweep
  auto* sw = app.add_subcommand("oracle-sweep", "Monte Carlo ground truth over a theta grid");
  std::string sw_env = "sinc", sw_grid = "0:1:0.01", sw_out;
  SweepConfig sw_cfg;
  double sw_eps = 0.01, sw_gamma = 0.95, sw_x0 = -1.0;
  sw->add_option("--env", sw_env)->capture_default_str();
  sw->add_option("--grid", sw_grid, "lo:hi:step")->capture_default_str();
  sw->add_option("--rollouts", sw_cfg.rollouts)->capture_default_str();
  sw->add_option("--horizon", sw_cfg.horizon)->capture_default_str();
  sw->add_option("--seed", sw_cfg.seed)->capture_default_str();
  sw->add_option("--threads", sw_cfg.threads)->capture_default_str();
  sw->add_option("--epsilon", sw_eps)->capture_default_str();
  sw->add_option("--gamma", sw_gamma)->capture_default_str();
  sw->add_option("--x0", sw_x0)->capture_default_str();
  sw->add_option("--out,-o", sw_out, "Output CSV (default stdout)");

  // optimize
  auto* op = app.add_subcommand("optimize", "Single optimizer run on one dataset");
  std::string op_alg = "mcpg-sf", op_data, op_out;
  int op_iter = 500, op_n = 200;
  std::uint64_t op_seed = 1;
  std::optional<std::uint64_t> op_data_seed;
  std::optional<double> op_theta0;
  StepConfig op_step;
  double op_lo = 0.0, op_hi = 1.0, op_eps = 0.01, op_gamma = 0.95, op_x0 = -1.0;
  std::optional<int> op_p, op_T;
  op->add_option("--algorithm", op_alg)->capture_default_str();
  op->add_option("--dataset", op_data, "Dataset CSV (default: generated benchmark grid)");
  op->add_option("--n", op_n, "Generated dataset size")->capture_default_str();
  op->add_option("--data-seed", op_data_seed, "Seed of the generated dataset (default --seed)");
  op->add_option("--iterations", op_iter)->capture_default_str();
  op->add_option("--seed", op_seed)->capture_default_str();
  op->add_option("--theta0", op_theta0, "Initial parameter (default uniform in the box)");
  op->add_option("--delta", op_step.delta)->capture_default_str();
  op->add_option("--a0", op_step.schedule.a0)->capture_default_str();
  op->add_option("--kappa", op_step.schedule.kappa)->capture_default_str();
  op->add_option("--omega", op_step.omega)->capture_default_str();
  op->add_flag("--literal-sf-scaling", op_step.sf_literal_scaling, "SF Hessian without the 1/2 factor");
  op->add_option("--alpha", op_step.risk.alpha, "Variance cap (risk variants)")->capture_default_str();
  op->add_option("--lambda-max", op_step.risk.lambda_max)->capture_default_str();
  op->add_option("--lo", op_lo)->capture_default_str();
  op->add_option("--hi", op_hi)->capture_default_str();
  op->add_option("--epsilon", op_eps)->capture_default_str();
  op->add_option("--gamma", op_gamma)->capture_default_str();
  op->add_option("--x0", op_x0)->capture_default_str();
  op->add_option("--p", op_p);
  op->add_option("--T", op_T);
  op->add_option("--out,-o", op_out, "Trace CSV (default stdout)");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Datasets x algorithms x iterations with aggregation");
  std::string ex_config, ex_out = "experiment";
  std::vector<std::string> ex_algs;
  ExperimentConfig ex_cfg;
  auto* ex_cfg_opt = ex->add_option("--config", ex_config, "JSON config; flags override it");
  auto* o_algs = ex->add_option("--algorithms", ex_algs, "Comma-separated algorithm names");
  auto* o_nd = ex->add_option("--n-datasets", ex_cfg.n_datasets);
  auto* o_it = ex->add_option("--iterations", ex_cfg.iterations);
  auto* o_seed = ex->add_option("--seed", ex_cfg.seed);
  auto* o_th = ex->add_option("--threads", ex_cfg.threads);
  auto* o_t0 = ex->add_option("--theta0", ex_cfg.theta0);
  auto* o_delta = ex->add_option("--delta", ex_cfg.delta);
  auto* o_n = ex->add_option("--n", ex_cfg.n);
  auto* o_exact = ex->add_flag("--literal-sf-scaling", ex_cfg.sf_literal_scaling);
  ex->add_option("--out,-o", ex_out, "Output directory")->capture_default_str();
  (void)ex_cfg_opt;

  // bounds-check
  auto* bc = app.add_subcommand("bounds-check", "Coverage of the high-probability MFMC bound");
  BoundsConfig bc_cfg;
  std::string bc_out;
  bc->add_option("--datasets", bc_cfg.datasets)->capture_default_str();
  bc->add_option("--n", bc_cfg.n)->capture_default_str();
  bc->add_option("--eta", bc_cfg.eta)->capture_default_str();
  bc->add_option("--theta", bc_cfg.theta)->capture_default_str();
  bc->add_option("--rollouts", bc_cfg.oracle_rollouts)->capture_default_str();
  bc->add_option("--seed", bc_cfg.seed)->capture_default_str();
  bc->add_option("--out,-o", bc_out, "Per-dataset CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      auto env = make_env(gen_env, gen_eps, gen_env == "lab" ? 0.9 : 0.95, gen_env == "lab" ? 0.5 : -1.0);
      SeededRng rng(gen_seed, 0);
      if (gen_layout != "grid" && gen_layout != "uniform") throw UsageError("layout must be grid or uniform");
      const BatchDataset ds = gen_layout == "grid" ? generate_grid_dataset(*env, gen_n, rng)
                                                   : generate_uniform_dataset(*env, gen_n, rng);
      with_output(gen_out, out, [&](std::ostream& o) { write_dataset_csv(o, ds); });
      err << "n=" << ds.size() << '\n';
    } else if (*ev) {
      const BatchDataset ds = read_dataset_csv(ev_data);
      const int dx = ds.state_dim(), du = ds.action_dim();
      const auto policy = PolicySpec::linear(dx, du, ParameterBox::unbounded(dx * du));
      MfmcConfig m;
      m.gamma = ev_gamma;
      m.x0 = Eigen::Map<const Vector>(ev_x0.data(), static_cast<Eigen::Index>(ev_x0.size()));
      m.T = ev_T.value_or(MfmcConfig::default_horizon(ev_gamma));
      m.p = ev_p.value_or(MfmcConfig::default_trajectories(ds.size(), m.T));
      const Vector theta = Eigen::Map<const Vector>(ev_theta.data(), static_cast<Eigen::Index>(ev_theta.size()));
      const MfmcReport rep = mfmc_estimate(ds, policy, theta, m);
      out << "j_hat=" << csv::format(rep.j_hat) << '\n';
      out << "v_hat=" << (rep.v_hat ? csv::format(*rep.v_hat) : std::string("nan")) << '\n';
      out << "p=" << m.p << "\nT=" << m.T << '\n';
      if (ev_b || ev_c) {
        if (!ev_b || !ev_c) throw UsageError("--var-b and --var-c go together");
        out << "var_criterion=" << csv::format(mfmc_var_criterion(rep, *ev_b, *ev_c)) << '\n';
      }
      if (!ev_out.empty()) {
        with_output(ev_out, out, [&](std::ostream& o) { write_report_csv(o, rep); });
        out << "indices=" << ev_out << '\n';
      }
    } else if (*sw) {
      parse_grid(sw_grid, sw_cfg);
      auto env = make_env(sw_env, sw_eps, sw_gamma, sw_x0);
      const auto rows = oracle_sweep(*env, sw_cfg);
      with_output(sw_out, out, [&](std::ostream& o) { write_sweep_csv(o, rows); });
      const auto& best = rows[sweep_argmin(rows)];
      err << "argmin theta=" << csv::format(best.theta) << " j_mean=" << csv::format(best.oracle.mean) << '\n';
    } else if (*op) {
      OptimizerConfig oc;
      oc.algorithm = parse_algorithm(op_alg);
      oc.seed = op_seed;
      if (op_step.schedule.kappa != 1.0) op_step.schedule.kind = StepSchedule::Kind::PowerLaw;
      oc.step = op_step;
      if (op_theta0) oc.theta0 = Vector::Constant(1, *op_theta0);

      std::optional<BatchDataset> ds;
      if (!op_data.empty()) {
        ds.emplace(read_dataset_csv(op_data));
      } else {
        SincEnv env(op_eps, op_gamma, op_x0);
        SeededRng rng(dataset_seed(op_data_seed.value_or(op_seed), 0), 0);
        ds.emplace(generate_grid_dataset(env, op_n, rng));
      }
      if (ds->state_dim() != 1 || ds->action_dim() != 1) throw InputError("optimize: 1-D datasets only");
      oc.step.box = ParameterBox::uniform(1, op_lo, op_hi);
      const auto policy = PolicySpec::linear(1, 1, oc.step.box);
      MfmcConfig m;
      m.gamma = op_gamma;
      m.x0 = Vector::Constant(1, op_x0);
      m.T = op_T.value_or(MfmcConfig::default_horizon(op_gamma));
      m.p = op_p.value_or(MfmcConfig::default_trajectories(ds->size(), m.T));
      const MfmcEvaluator eval(*ds, policy, m, evaluation_margin(oc.algorithm, oc.step.delta));
      const Trace trace = run_optimizer(oc, eval, op_iter);
      with_output(op_out, out, [&](std::ostream& o) { write_trace_csv(o, trace); });
      const auto& last = trace.rows.back();
      err << "theta=" << csv::format(last.theta[0]) << " theta_bar=" << csv::format(last.theta_bar[0])
          << " failed_steps=" << trace.failed_steps << '\n';
    } else if (*ex) {
      ExperimentConfig cfg;
      if (!ex_config.empty()) {
        std::ifstream f(ex_config);
        if (!f) throw std::runtime_error("cannot read " + ex_config);
        std::stringstream buf;
        buf << f.rdbuf();
        cfg = experiment_config_from_json(buf.str());
      }
      if (o_algs->count()) cfg.algorithms = parse_algorithm_list(ex_algs);
      if (o_nd->count()) cfg.n_datasets = ex_cfg.n_datasets;
      if (o_it->count()) cfg.iterations = ex_cfg.iterations;
      if (o_seed->count()) cfg.seed = ex_cfg.seed;
      if (o_th->count()) cfg.threads = ex_cfg.threads;
      if (o_t0->count()) cfg.theta0 = ex_cfg.theta0;
      if (o_delta->count()) cfg.delta = ex_cfg.delta;
      if (o_n->count()) cfg.n = ex_cfg.n;
      if (o_exact->count()) cfg.sf_literal_scaling = true;
      cfg.output_dir = ex_out;
      const auto res = run_experiment(cfg);
      for (const auto& agg : res.aggregates) {
        const auto& last = agg.rows.back();
        out << algorithm_name(agg.algorithm) << " runs=" << agg.runs
            << " theta_bar_mean=" << csv::format(last.theta_bar_mean)
            << " theta_bar_sd=" << csv::format(last.theta_bar_sd)
            << " theta_mean=" << csv::format(last.theta_mean)
            << " theta_sd=" << csv::format(last.theta_sd) << '\n';
      }
      out << "evaluator_calls=" << res.evaluator_calls << "\noutput=" << cfg.output_dir << '\n';
    } else if (*bc) {
      const auto rep = bounds_check(bc_cfg);
      if (!bc_out.empty()) with_output(bc_out, out, [&](std::ostream& o) { write_bounds_csv(o, rep); });
      out << "L_f=" << csv::format(rep.constants.L_f) << "\nL_c=" << csv::format(rep.constants.L_c)
          << "\nL_theta=" << csv::format(rep.constants.L_theta) << "\np=" << rep.p << "\nT=" << rep.T
          << "\nj_oracle=" << csv::format(rep.j_oracle) << "\ncovered=" << rep.covered()
          << "\ndatasets=" << rep.rows.size() << "\ncoverage=" << csv::format(rep.coverage()) << '\n';
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace mcps
