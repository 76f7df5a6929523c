#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "mcps/mfmc.hpp"
#include "oracles.hpp"

using namespace mcps;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

const auto kFree = PolicySpec::linear(1, 1, ParameterBox::unbounded(1));

MfmcConfig config(int p, int T, double gamma, double x0 = 0.0) { return {p, T, gamma, v1(x0)}; }

BatchDataset two_rows() {
  return BatchDataset(1, 1, {{v1(0), v1(0), 0.5, v1(1), 0}, {v1(1), v1(0), 0.2, v1(0), 0}});
}

MfmcReport with_returns(std::vector<double> r) {
  MfmcReport rep;
  rep.trajectory_returns = std::move(r);
  double s = 0.0;
  for (double x : rep.trajectory_returns) s += x;
  rep.j_hat = s / static_cast<double>(rep.trajectory_returns.size());
  return rep;
}

BatchDataset random_dataset(SeededRng& rng, int n, int dx = 1, int du = 1, bool lattice = false) {
  std::vector<Transition> ts;
  auto draw = [&] { return lattice ? std::round(rng.uniform(-2, 2)) : rng.uniform(-1, 1); };
  for (int l = 0; l < n; ++l) {
    Transition tr;
    tr.x.resize(dx);
    tr.u.resize(du);
    tr.y.resize(dx);
    for (auto& v : tr.x) v = draw();
    for (auto& v : tr.u) v = draw();
    for (auto& v : tr.y) v = draw();
    tr.c = rng.uniform();
    ts.push_back(tr);
  }
  return BatchDataset(dx, du, ts);
}

}  // namespace

TEST_CASE("two-transition hand simulation") {
  const auto ds = two_rows();
  const auto rep = mfmc_estimate(ds, kFree, v1(0), config(1, 2, 0.5));
  CHECK(rep.j_hat == doctest::Approx(0.6));
  REQUIRE(rep.selected_indices.size() == 1);
  CHECK(rep.selected_indices[0] == std::vector<std::size_t>{1, 2});
  CHECK(rep.distances[0][0] == 0.0);

  const auto one = mfmc_estimate(ds, kFree, v1(0), config(1, 1, 0.9));
  CHECK(one.j_hat == 0.5);
  CHECK_FALSE(one.v_hat.has_value());
}

TEST_CASE("zero costs give zero estimate and variance") {
  SeededRng rng(5);
  std::vector<Transition> ts;
  for (int l = 0; l < 30; ++l) ts.push_back({v1(rng.uniform()), v1(rng.uniform()), 0.0, v1(rng.uniform()), 0});
  const BatchDataset ds(1, 1, ts);
  const auto rep = mfmc_estimate(ds, kFree, v1(0.3), config(3, 5, 0.95));
  CHECK(rep.j_hat == 0.0);
  REQUIRE(rep.v_hat.has_value());
  CHECK(*rep.v_hat == 0.0);
}

TEST_CASE("capacity and input errors") {
  const auto ds = two_rows();
  CHECK_THROWS_AS(mfmc_estimate(ds, kFree, v1(0), config(1, 3, 0.5)), CapacityError);
  CHECK_THROWS_AS(mfmc_estimate(ds, kFree, v1(0), config(2, 2, 0.5)), CapacityError);
  const BatchDataset empty(1, 1, {});
  CHECK_THROWS_AS(mfmc_estimate(empty, kFree, v1(0), config(1, 1, 0.5)), InputError);
  CHECK_THROWS_AS(mfmc_estimate(ds, kFree, v1(0), config(1, 1, 1.0)), InputError);
  const auto boxed = PolicySpec::linear(1, 1, ParameterBox::uniform(1, 0, 1));
  CHECK_THROWS_AS(mfmc_estimate(ds, boxed, v1(2), config(1, 1, 0.5)), InputError);
}

TEST_CASE("sample variance") {
  CHECK(mfmc_variance(with_returns({1, 3})) == 2.0);
  CHECK(mfmc_variance(with_returns({0.7, 0.7, 0.7})) == doctest::Approx(0.0));
  CHECK(mfmc_variance(with_returns({0, 1, 2})) == 1.0);
  CHECK_THROWS_AS(mfmc_variance(with_returns({1})), DomainError);
}

TEST_CASE("VaR-like criterion") {
  const auto rep = with_returns({0.5, 2.0});
  CHECK(mfmc_var_criterion(rep, 1.0, 0.4) == std::numeric_limits<double>::infinity());
  CHECK(mfmc_var_criterion(rep, 1.0, 0.5) == rep.j_hat);
  CHECK(mfmc_var_criterion(rep, 5.0, 0.0) == rep.j_hat);
  CHECK_THROWS_AS(mfmc_var_criterion(rep, 1.0, 1.0), InputError);
  CHECK_THROWS_AS(mfmc_var_criterion(rep, 1.0, -0.1), InputError);
}

TEST_CASE("ties go to the lowest index") {
  // Rows 2, 3 and 4 are all at distance 1 from (0, 0); row 1 is farther.
  const BatchDataset ds(1, 1,
                        {{v1(3), v1(0), 0.9, v1(0), 0},
                         {v1(1), v1(0), 0.1, v1(5), 0},
                         {v1(-1), v1(0), 0.2, v1(5), 0},
                         {v1(0), v1(1), 0.3, v1(5), 0}});
  const auto rep = mfmc_estimate(ds, kFree, v1(0), config(3, 1, 0.5));
  CHECK(rep.selected_indices[0][0] == 2);
  CHECK(rep.selected_indices[1][0] == 3);
  CHECK(rep.selected_indices[2][0] == 4);
}

TEST_CASE("each transition is consumed at most once; returns stay in range") {
  SeededRng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ds = random_dataset(rng, 120, 1, 1, trial % 2 == 0);
    const int p = 1 + trial % 4, T = 1 + trial % 7;
    const double gamma = 0.9;
    const auto rep = mfmc_estimate(ds, kFree, v1(rng.uniform(-1, 1)), config(p, T, gamma));
    std::set<std::size_t> seen;
    for (const auto& row : rep.selected_indices) seen.insert(row.begin(), row.end());
    CHECK(seen.size() == static_cast<std::size_t>(p * T));

    double geo = 0.0;
    for (int t = 0; t < T; ++t) geo += std::pow(gamma, t);
    double mean = 0.0;
    for (double r : rep.trajectory_returns) {
      CHECK(r >= geo * ds.min_cost() - 1e-12);
      CHECK(r <= geo * ds.max_cost() + 1e-12);
      mean += r;
    }
    mean /= p;
    CHECK(std::abs(rep.j_hat - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
  }
}

TEST_CASE("exact replay of a noise-free on-policy trajectory") {
  // Deterministic system x' = 0.5 x + u, cost x^2, policy u = 0.2 x, from x0 = 1.
  const double theta = 0.2, gamma = 0.9;
  std::vector<Transition> ts;
  double x = 1.0, truth = 0.0;
  for (int t = 0; t < 6; ++t) {
    const double u = theta * x;
    ts.push_back({v1(x), v1(u), x * x, v1(0.5 * x + u), 0});
    truth += std::pow(gamma, t) * x * x;
    x = 0.5 * x + u;
  }
  std::reverse(ts.begin(), ts.end());
  ts.push_back({v1(10), v1(10), 100.0, v1(0), 0});
  const BatchDataset ds(1, 1, ts);
  const auto rep = mfmc_estimate(ds, kFree, v1(theta), config(1, 6, gamma, 1.0));
  CHECK(rep.j_hat == doctest::Approx(truth).epsilon(1e-14));
  for (double d : rep.distances[0]) CHECK(d == 0.0);
}

TEST_CASE("estimate is deterministic") {
  SeededRng rng(23);
  const auto ds = random_dataset(rng, 200);
  const auto a = mfmc_estimate(ds, kFree, v1(0.4), config(3, 20, 0.95));
  const auto b = mfmc_estimate(ds, kFree, v1(0.4), config(3, 20, 0.95));
  CHECK(a.j_hat == b.j_hat);
  CHECK(a.selected_indices == b.selected_indices);
}

TEST_CASE("agrees with the brute-force reconstruction") {
  SeededRng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int dx = 1 + trial % 2, du = 1 + (trial / 2) % 2;
    const int n = 4 + trial % 20;
    const auto ds = random_dataset(rng, n, dx, du, trial % 3 == 0);
    const int T = 1 + trial % 4;
    const int p = std::max(1, std::min(3, n / T));
    const double gamma = 0.5 + 0.4 * rng.uniform();
    Vector theta(dx * du);
    for (auto& v : theta) v = std::round(rng.uniform(-2, 2) * 2) / 2;
    Vector x0(dx);
    for (auto& v : x0) v = std::round(rng.uniform(-2, 2));
    const auto pol = PolicySpec::linear(dx, du, ParameterBox::unbounded(dx * du));

    std::vector<oracle::Row> rows;
    for (std::size_t l = 0; l < ds.size(); ++l) {
      const auto tr = ds.transition(l);
      rows.push_back({{tr.x.data(), tr.x.data() + dx}, {tr.u.data(), tr.u.data() + du}, tr.c,
                      {tr.y.data(), tr.y.data() + dx}});
    }
    auto policy = [&](const std::vector<double>& x) {
      const Vector u = pol.action(theta, Eigen::Map<const Vector>(x.data(), dx));
      return std::vector<double>(u.data(), u.data() + du);
    };
    const auto ref = oracle::brute_force_mfmc(rows, policy, {x0.data(), x0.data() + dx}, p, T, gamma);
    const auto rep = mfmc_estimate(ds, pol, theta, {p, T, gamma, x0});
    REQUIRE(rep.selected_indices == ref.indices);
    REQUIRE(rep.trajectory_returns == ref.returns);
    REQUIRE(rep.j_hat == ref.j);
  }
}

TEST_CASE("report csv") {
  const auto rep = mfmc_estimate(two_rows(), kFree, v1(0), config(1, 2, 0.5));
  std::stringstream out;
  write_report_csv(out, rep);
  CHECK(out.str() ==
        "trajectory,step,index,cost,distance\n1,0,1,0.5,0\n1,1,2,0.2,0\n# j_hat=0.6 v_hat=nan p=1 T=2\n");
}

TEST_CASE("default horizon and trajectory count") {
  CHECK(MfmcConfig::default_horizon(0.95) == 20);
  CHECK(MfmcConfig::default_horizon(0.9) == 10);
  CHECK(MfmcConfig::default_trajectories(196, 20) == 3);
  CHECK(MfmcConfig::default_trajectories(20, 20) == 1);
  CHECK(MfmcConfig::default_trajectories(45, 20) == 1);
  CHECK(MfmcConfig::default_trajectories(100, 20) == 2);
  CHECK(MfmcConfig::default_trajectories(60, 20) == 2);
  CHECK_THROWS_AS(MfmcConfig::default_trajectories(10, 20), CapacityError);
}

TEST_CASE("dispersion") {
  const BatchDataset line(1, 1, {{v1(0), v1(0), 0, v1(0), 0}, {v1(1), v1(0), 0, v1(0), 0}});
  const std::vector<Probe> probes{{v1(0), v1(0)}, {v1(0.5), v1(0)}, {v1(1), v1(0)}};
  CHECK(dispersion(line, 1, probes) == 0.5);
  CHECK(dispersion(line, 1, {{v1(0), v1(0)}, {v1(1), v1(0)}}) == 0.0);
  CHECK(dispersion(line, 2, {{v1(-0.25), v1(0.5)}}) == doctest::Approx(1.75));
  CHECK_THROWS_AS(dispersion(line, 3, probes), InputError);
  CHECK_THROWS_AS(dispersion(line, 0, probes), InputError);

  const auto probes2 = default_probes(line, 11);
  CHECK(probes2.size() == 2 + 121);
  CHECK(dispersion(line, 1, probes2) == doctest::Approx(0.5));
}

TEST_CASE("bias bounds") {
  const LipschitzConstants none{0, 0, 0};
  CHECK(bias_bound(none, 0.95, 20, 1.0) == doctest::Approx(std::pow(0.95, 20) / 0.05));
  CHECK(bias_bound(none, 0.95, 20, 1.0) == doctest::Approx(7.1697).epsilon(1e-4));
  CHECK(bias_bound({1.0, 1.0, 0.0}, 0.5, 2000, 0.0) == doctest::Approx(0.0));

  const LipschitzConstants lc{0.5, 1.0, 0.5};
  CHECK(q_lipschitz(lc, 0.5) == doctest::Approx(1.6));
  CHECK(bias_constant(lc, 0.5, 2) == doctest::Approx(2.4));
  CHECK(bias_bound(lc, 0.5, 2, 0.1) == doctest::Approx(2.4 * 0.1 + 0.25 / 0.5));

  const double b = bias_bound(lc, 0.5, 2, 0.1);
  CHECK(hp_bound(lc, 0.5, 2, 0.1, 1, 0.05) == doctest::Approx(b * std::sqrt(2 * std::log(40.0))));
  CHECK(hp_bound(lc, 0.5, 2, 0.1, 4, 0.05) == doctest::Approx(b * std::sqrt(2 * std::log(40.0) / 4)));

  CHECK_THROWS_AS(q_lipschitz({2.0, 1.0, 0.0}, 0.5), DomainError);
  CHECK_THROWS_AS(hp_bound(lc, 0.5, 2, 0.1, 1, 1.0), InputError);
  CHECK_THROWS_AS(hp_bound(lc, 0.5, 2, 0.1, 0, 0.05), InputError);
}

TEST_CASE("MFMC-backed evaluator widens the box") {
  const auto boxed = PolicySpec::linear(1, 1, ParameterBox::uniform(1, 0, 1));
  const auto ds = two_rows();
  const MfmcEvaluator eval(ds, boxed, config(1, 2, 0.5), 0.2);
  CHECK(eval.evaluate(v1(1.15)).j == eval.report(v1(1.15)).j_hat);
  CHECK_THROWS_AS(eval.evaluate(v1(1.3)), InputError);
}
