#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcps/csv.hpp"
#include "mcps/harness.hpp"

using namespace mcps;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mcps_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

struct Cli {
  int code;
  std::string out;
  std::string err;
};

Cli run(std::vector<std::string> args) {
  args.insert(args.begin(), "mcps");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.n_datasets = 3;
  cfg.iterations = 20;
  cfg.threads = 2;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("experiment config json round trip") {
  ExperimentConfig cfg;
  cfg.algorithms = {Algorithm::McpgSf, Algorithm::RiskMcpn};
  cfg.theta0 = 0.25;
  cfg.p = 2;
  cfg.schedule = StepSchedule::power_law(0.5, 0.8);
  cfg.risk.alpha = 0.3;
  const auto back = experiment_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(back.algorithms == cfg.algorithms);
  CHECK(back.theta0 == cfg.theta0);
  CHECK(back.schedule.kind == StepSchedule::Kind::PowerLaw);
  CHECK_FALSE(back.T.has_value());

  CHECK_THROWS_AS(experiment_config_from_json(R"({"n_dataset": 3})"), InputError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"algorithms": ["newton"]})"), InputError);
  CHECK_THROWS_AS(experiment_config_from_json(R"({"iterations": 0})"), InputError);
  CHECK_THROWS_AS(experiment_config_from_json("[1, 2"), InputError);
  CHECK(experiment_config_from_json("{}").n_datasets == 50);
}

TEST_CASE("experiment datasets share their state-action pairs") {
  const auto cfg = small_config();
  const auto a = experiment_dataset(cfg, 0), b = experiment_dataset(cfg, 1);
  REQUIRE(a.size() == 196);
  bool costs_differ = false;
  for (std::size_t l = 0; l < a.size(); ++l) {
    CHECK(a.state(l)[0] == b.state(l)[0]);
    CHECK(a.action(l)[0] == b.action(l)[0]);
    costs_differ |= a.cost(l) != b.cost(l);
  }
  CHECK(costs_differ);
  const auto m = experiment_mfmc_config(cfg, a.size());
  CHECK(m.T == 20);
  CHECK(m.p == 3);
}

TEST_CASE("experiment outputs and aggregation") {
  auto cfg = small_config();
  const fs::path dir = scratch("exp");
  cfg.output_dir = dir.string();
  const auto res = run_experiment(cfg);
  CHECK(res.warnings.empty());
  CHECK(res.evaluator_calls == 3L * 20 * (2 + 2 + 4 + 4));
  REQUIRE(res.aggregates.size() == 4);
  CHECK(fs::exists(dir / "config.json"));
  CHECK(experiment_config_from_json(slurp(dir / "config.json")).seed == 7);
  for (Algorithm alg : cfg.algorithms) {
    const std::string name(algorithm_name(alg));
    CHECK(fs::exists(dir / "aggregate" / (name + ".csv")));
    for (const char* f : {"000.csv", "001.csv", "002.csv"}) CHECK(fs::exists(dir / "runs" / name / f));
  }

  // Every algorithm on a dataset starts from the same point.
  for (int i = 0; i < 3; ++i) {
    CHECK(res.runs[i].trace.theta0 == res.runs[3 + i].trace.theta0);
    CHECK(res.runs[i].trace.theta0 == res.runs[9 + i].trace.theta0);
  }

  // Aggregates recomputed from the per-run traces.
  for (std::size_t a = 0; a < res.aggregates.size(); ++a) {
    const auto& agg = res.aggregates[a];
    CHECK(agg.runs == 3);
    CHECK(agg.ci_valid);
    for (std::size_t k = 0; k < agg.rows.size(); ++k) {
      double mean = 0.0, ss = 0.0;
      for (int i = 0; i < 3; ++i) mean += res.runs[a * 3 + i].trace.rows[k].theta_bar[0] / 3;
      for (int i = 0; i < 3; ++i) {
        const double d = res.runs[a * 3 + i].trace.rows[k].theta_bar[0] - mean;
        ss += d * d;
      }
      const double sd = std::sqrt(ss / 2);
      CHECK(std::abs(agg.rows[k].theta_bar_mean - mean) <= 1e-12);
      CHECK(std::abs(agg.rows[k].theta_bar_sd - sd) <= 1e-12);
      CHECK(std::abs(agg.rows[k].theta_bar_ci - 1.96 * sd / std::sqrt(3.0)) <= 1e-12);
      CHECK(agg.rows[k].theta_ci >= 0.0);
      CHECK(agg.rows[k].theta_mean >= 0.0);
      CHECK(agg.rows[k].theta_mean <= 1.0);
    }
  }

  // Same master seed, different worker count: identical bytes.
  auto again = cfg;
  const fs::path dir2 = scratch("exp2");
  again.output_dir = dir2.string();
  again.threads = 1;
  run_experiment(again);
  for (Algorithm alg : cfg.algorithms) {
    const std::string f = std::string(algorithm_name(alg)) + ".csv";
    CHECK(slurp(dir / "aggregate" / f) == slurp(dir2 / "aggregate" / f));
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("single-dataset aggregation flags the interval") {
  auto cfg = small_config();
  cfg.n_datasets = 1;
  cfg.algorithms = {Algorithm::McpgSf};
  const auto res = run_experiment(cfg);
  const auto& agg = res.aggregates.front();
  CHECK_FALSE(agg.ci_valid);
  for (const auto& row : agg.rows) {
    CHECK(row.theta_ci == 0.0);
    CHECK(row.theta_sd == 0.0);
  }
  std::ostringstream out;
  write_aggregate_csv(out, agg);
  const std::string text = out.str();
  CHECK(text.substr(0, text.find('\n')) ==
        "t,theta_mean,theta_sd,theta_ci,theta_bar_mean,theta_bar_sd,theta_bar_ci,runs,ci_valid");
  CHECK(text.find(",1,0\n") != std::string::npos);
}

TEST_CASE("failed runs are excluded until too many fail") {
  // 16 transitions cannot host p * T = 40 steps, so every evaluation fails.
  auto cfg = small_config();
  cfg.algorithms = {Algorithm::RiskMcpg};
  cfg.p = 2;
  cfg.n = 16;
  CHECK_THROWS_AS(run_experiment(cfg), std::runtime_error);
}

TEST_CASE("oracle sweep") {
  SweepConfig sc;
  parse_grid("0:0.2:0.05", sc);
  sc.rollouts = 200;
  sc.horizon = 50;
  const auto rows = oracle_sweep(SincEnv(), sc);
  REQUIRE(rows.size() == 5);
  CHECK(rows.back().theta == 0.2);
  CHECK(rows[1].theta == doctest::Approx(0.05));
  std::ostringstream out;
  write_sweep_csv(out, rows);
  CHECK(out.str().rfind("theta,j_mean,j_var,se\n", 0) == 0);
  CHECK(sweep_argmin(rows) < rows.size());
  CHECK_THROWS_AS(parse_grid("0:1", sc), InputError);
}

TEST_CASE("bounds check on a small lab run") {
  BoundsConfig bc;
  bc.datasets = 5;
  bc.oracle_rollouts = 2000;
  const auto rep = bounds_check(bc);
  CHECK(rep.rows.size() == 5);
  CHECK(rep.T == 10);
  CHECK(rep.p == 4);
  CHECK(rep.constants.L_theta == 0.5);
  for (const auto& r : rep.rows) {
    CHECK(r.bound > 0.0);
    CHECK(r.alpha > 0.0);
  }
  CHECK(rep.coverage() >= 0.0);

  bc.theta = 2.0;  // 0.9 * 0.4 * 3 > 1
  CHECK_THROWS_AS(bounds_check(bc), DomainError);
}

TEST_CASE("cli: usage errors") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"evaluate", "--bogus"}).code == 1);
  CHECK(run({"evaluate"}).code == 1);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"gen-data", "--env", "moon"}).code == 1);
}

TEST_CASE("cli: generate, evaluate, optimize") {
  const fs::path dir = scratch("cli");
  const std::string data = (dir / "d.csv").string();
  auto gen = run({"gen-data", "--n", "200", "--seed", "3", "--out", data});
  REQUIRE(gen.code == 0);
  CHECK(read_dataset_csv(data).size() == 196);

  const std::string idx = (dir / "sel.csv").string();
  auto ev = run({"evaluate", "--dataset", data, "--theta", "0.5", "--p", "3", "--T", "20", "--gamma",
                 "0.95", "--indices-out", idx});
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("j_hat=") != std::string::npos);
  CHECK(ev.out.find("v_hat=") != std::string::npos);
  CHECK(ev.out.find("indices=" + idx) != std::string::npos);
  CHECK(slurp(idx).rfind("trajectory,step,index,cost,distance\n", 0) == 0);

  auto too_long = run({"evaluate", "--dataset", data, "--theta", "0.5", "--p", "10", "--T", "20"});
  CHECK(too_long.code == 2);
  CHECK(run({"evaluate", "--dataset", (dir / "missing.csv").string(), "--theta", "0.5"}).code == 2);

  const std::string trace = (dir / "t.csv").string();
  auto op = run({"optimize", "--algorithm", "mcpn-spsa", "--dataset", data, "--iterations", "30",
                 "--seed", "2", "--out", trace});
  REQUIRE(op.code == 0);
  std::ifstream f(trace);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 32);
  fs::remove_all(dir);
}

TEST_CASE("cli: experiment smoke run through the executable") {
  const fs::path dir = scratch("cli_exp");
  const std::string cmd = std::string(MCPS_CLI) +
                          " experiment --algorithms mcpg-sf --n-datasets 2 --iterations 10 --seed 7 --out " +
                          (dir / "out").string() + " > " + (dir / "log.txt").string() + " 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "out" / "runs" / "mcpg-sf" / "000.csv"));
  CHECK(fs::exists(dir / "out" / "runs" / "mcpg-sf" / "001.csv"));
  CHECK(fs::exists(dir / "out" / "aggregate" / "mcpg-sf.csv"));
  CHECK_FALSE(fs::exists(dir / "out" / "aggregate" / "mcpg-spsa.csv"));
  fs::remove_all(dir);
}

TEST_CASE("cli: oracle sweep and bounds check") {
  auto sw = run({"oracle-sweep", "--env", "sinc", "--grid", "0:0.1:0.05", "--rollouts", "50",
                 "--horizon", "40"});
  REQUIRE(sw.code == 0);
  CHECK(sw.out.rfind("theta,j_mean,j_var,se\n", 0) == 0);
  CHECK(sw.err.find("argmin theta=") != std::string::npos);

  auto bc = run({"bounds-check", "--datasets", "3", "--rollouts", "500"});
  REQUIRE(bc.code == 0);
  CHECK(bc.out.find("coverage=") != std::string::npos);
  CHECK(bc.out.find("L_f=0.4") != std::string::npos);
}

TEST_CASE("Newton probes from the box edge stay evaluable") {
  const SincEnv env;
  SeededRng rng(3, 0);
  const auto ds = generate_grid_dataset(env, 200, rng);
  const auto policy = PolicySpec::linear(1, 1, ParameterBox::uniform(1, 0, 1));
  for (Algorithm alg : {Algorithm::McpnSpsa, Algorithm::McpnWoodbury, Algorithm::RiskMcpn}) {
    const MfmcEvaluator eval(ds, policy, {3, 20, 0.95, Vector::Constant(1, -1.0)}, evaluation_margin(alg, 0.1));
    for (double edge : {0.0, 1.0}) {
      OptimizerConfig oc;
      oc.algorithm = alg;
      oc.theta0 = Vector::Constant(1, edge);
      oc.step.schedule.a0 = 0.5;
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        oc.seed = seed;
        const auto tr = run_optimizer(oc, eval, 3);
        CHECK(tr.failed_steps == 0);
      }
    }
  }
}
