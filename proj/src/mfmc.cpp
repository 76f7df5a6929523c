#include "mcps/mfmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "mcps/csv.hpp"

namespace mcps {

int MfmcConfig::default_horizon(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("mfmc: gamma must be in (0, 1)");
  return static_cast<int>(std::ceil(1.0 / (1.0 - gamma) - 1e-9));
}

int MfmcConfig::default_trajectories(std::size_t n, int T) {
  if (T < 1) throw InputError("mfmc: T must be >= 1");
  const std::size_t cap = n / static_cast<std::size_t>(T);
  if (cap < 1) throw CapacityError("mfmc: dataset too small for a single trajectory of length T");
  const double ratio = static_cast<double>(n) / static_cast<double>(T);
  const double p = std::ceil(std::log(ratio));
  return static_cast<int>(std::clamp<double>(p, 1.0, static_cast<double>(cap)));
}

void MfmcConfig::validate() const {
  if (p < 1) throw InputError("mfmc: p must be >= 1");
  if (T < 1) throw InputError("mfmc: T must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("mfmc: gamma must be in (0, 1)");
  if (x0.size() == 0 || !x0.allFinite()) throw InputError("mfmc: x0 must be a finite vector");
}

MfmcReport mfmc_estimate(const BatchDataset& dataset, const PolicySpec& policy, const Vector& theta,
                         const MfmcConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw InputError("mfmc: empty dataset");
  const std::size_t n = dataset.size();
  const auto needed = static_cast<std::size_t>(cfg.p) * static_cast<std::size_t>(cfg.T);
  if (needed > n) {
    throw CapacityError("mfmc: p*T = " + std::to_string(needed) + " exceeds dataset size " +
                        std::to_string(n));
  }
  if (cfg.x0.size() != dataset.state_dim() || policy.state_dim() != dataset.state_dim() ||
      policy.action_dim() != dataset.action_dim()) {
    throw InputError("mfmc: policy/x0 dimensions do not match the dataset");
  }
  policy.check_theta(theta);

  MfmcReport report;
  report.trajectory_returns.reserve(cfg.p);
  report.selected_indices.assign(cfg.p, std::vector<std::size_t>(cfg.T));
  report.distances.assign(cfg.p, std::vector<double>(cfg.T));
  report.costs.assign(cfg.p, std::vector<double>(cfg.T));

  // Consumed transitions; the dataset itself is never touched.
  std::vector<char> used(n, 0);

  for (int i = 0; i < cfg.p; ++i) {
    Vector x = cfg.x0;
    double ret = 0.0;
    for (int t = 0; t < cfg.T; ++t) {
      const Vector u = policy.action(theta, x);
      const auto xs = as_span(x);
      const auto us = as_span(u);

      double best = std::numeric_limits<double>::infinity();
      std::size_t best_row = n;
      for (std::size_t row = 0; row < n; ++row) {
        if (used[row]) continue;
        const double d = dataset.distance_to(row, xs, us);
        if (d < best) {  // strict: earlier (lower index) rows win ties
          best = d;
          best_row = row;
        }
      }
      if (best_row == n) throw CapacityError("mfmc: no transition left to select");

      used[best_row] = 1;
      const double c = dataset.cost(best_row);
      ret += std::pow(cfg.gamma, t) * c;
      report.selected_indices[i][t] = best_row + 1;
      report.distances[i][t] = best;
      report.costs[i][t] = c;
      const auto y = dataset.successor(best_row);
      x = Eigen::Map<const Vector>(y.data(), dataset.state_dim());
    }
    report.trajectory_returns.push_back(ret);
  }

  double sum = 0.0;
  for (double r : report.trajectory_returns) sum += r;
  report.j_hat = sum / cfg.p;
  if (cfg.p >= 2) report.v_hat = mfmc_variance(report);
  return report;
}

double mfmc_variance(const MfmcReport& report) {
  const auto& r = report.trajectory_returns;
  if (r.size() < 2) throw DomainError("mfmc_variance: undefined for fewer than 2 trajectories");
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(r.size() - 1);
}

double mfmc_var_criterion(const MfmcReport& report, double b, double c) {
  if (!(c >= 0.0 && c < 1.0)) throw InputError("var criterion: c must lie in [0, 1)");
  const auto& r = report.trajectory_returns;
  if (r.empty()) throw InputError("var criterion: report has no trajectories");
  const auto exceed = std::count_if(r.begin(), r.end(), [b](double v) { return v > b; });
  const double fraction = static_cast<double>(exceed) / static_cast<double>(r.size());
  return fraction > c ? std::numeric_limits<double>::infinity() : report.j_hat;
}

void write_report_csv(std::ostream& out, const MfmcReport& report) {
  csv::write_row(out, {"trajectory", "step", "index", "cost", "distance"});
  for (int i = 0; i < report.p(); ++i) {
    for (int t = 0; t < report.T(); ++t) {
      csv::write_row(out, {std::to_string(i + 1), std::to_string(t),
                           std::to_string(report.selected_indices[i][t]),
                           csv::format(report.costs[i][t]), csv::format(report.distances[i][t])});
    }
  }
  out << "# j_hat=" << csv::format(report.j_hat)
      << " v_hat=" << (report.v_hat ? csv::format(*report.v_hat) : std::string("nan"))
      << " p=" << report.p() << " T=" << report.T() << '\n';
}

// ---------------------------------------------------------------------------

double dispersion(const BatchDataset& dataset, int k, const std::vector<Probe>& probes) {
  const std::size_t n = dataset.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw InputError("dispersion: k must lie in [1, n]");
  }
  if (probes.empty()) throw InputError("dispersion: no probes");
  std::vector<double> dist(n);
  double worst = 0.0;
  for (const auto& probe : probes) {
    if (probe.x.size() != dataset.state_dim() || probe.u.size() != dataset.action_dim()) {
      throw InputError("dispersion: probe dimension mismatch");
    }
    for (std::size_t row = 0; row < n; ++row) {
      dist[row] = dataset.distance_to(row, as_span(probe.x), as_span(probe.u));
    }
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    worst = std::max(worst, dist[k - 1]);
  }
  return worst;
}

std::vector<Probe> default_probes(const BatchDataset& dataset, int grid_points) {
  std::vector<Probe> probes;
  const int dx = dataset.state_dim();
  const int du = dataset.action_dim();
  for (std::size_t row = 0; row < dataset.size(); ++row) {
    const auto x = dataset.state(row);
    const auto u = dataset.action(row);
    probes.push_back({Eigen::Map<const Vector>(x.data(), dx), Eigen::Map<const Vector>(u.data(), du)});
  }
  if (dx + du > 2 || dataset.empty() || grid_points < 2) return probes;

  // dx == du == 1: grid over the bounding box of the stored pairs.
  double xlo = dataset.state(0)[0], xhi = xlo, ulo = dataset.action(0)[0], uhi = ulo;
  for (std::size_t row = 1; row < dataset.size(); ++row) {
    xlo = std::min(xlo, dataset.state(row)[0]);
    xhi = std::max(xhi, dataset.state(row)[0]);
    ulo = std::min(ulo, dataset.action(row)[0]);
    uhi = std::max(uhi, dataset.action(row)[0]);
  }
  const double step = 1.0 / (grid_points - 1);
  for (int i = 0; i < grid_points; ++i) {
    for (int j = 0; j < grid_points; ++j) {
      probes.push_back({Vector::Constant(1, xlo + (xhi - xlo) * i * step),
                        Vector::Constant(1, ulo + (uhi - ulo) * j * step)});
    }
  }
  return probes;
}

double q_lipschitz(const LipschitzConstants& lc, double gamma) {
  if (!(lc.L_f >= 0.0 && lc.L_c >= 0.0 && lc.L_theta >= 0.0) ||
      !std::isfinite(lc.L_f + lc.L_c + lc.L_theta)) {
    throw InputError("lipschitz constants must be finite and nonnegative");
  }
  const double contraction = gamma * lc.L_f * (1.0 + lc.L_theta);
  if (!(contraction < 1.0)) {
    throw DomainError("bias bound requires gamma*L_f*(1+L_theta) < 1, got " +
                      std::to_string(contraction));
  }
  return lc.L_c / (1.0 - contraction);
}

double bias_constant(const LipschitzConstants& lc, double gamma, int T) {
  if (T < 1) throw InputError("bias bound: T must be >= 1");
  double geometric = 0.0;
  for (int t = 0; t < T; ++t) geometric += std::pow(gamma, t);
  return q_lipschitz(lc, gamma) * geometric;
}

double bias_bound(const LipschitzConstants& lc, double gamma, int T, double alpha_pT) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("bias bound: gamma must be in (0, 1)");
  if (!(alpha_pT >= 0.0)) throw InputError("bias bound: alpha must be >= 0");
  return bias_constant(lc, gamma, T) * alpha_pT + std::pow(gamma, T) / (1.0 - gamma);
}

double hp_bound(const LipschitzConstants& lc, double gamma, int T, double alpha_pT, int p,
                double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw InputError("hp bound: eta must be in (0, 1)");
  if (p < 1) throw InputError("hp bound: p must be >= 1");
  return bias_bound(lc, gamma, T, alpha_pT) * std::sqrt(2.0 * std::log(2.0 / eta) / p);
}

// ---------------------------------------------------------------------------

MfmcEvaluator::MfmcEvaluator(const BatchDataset& dataset, const PolicySpec& policy, MfmcConfig cfg,
                             double margin)
    : dataset_(dataset), policy_(policy.with_box(policy.box().widened(margin))), cfg_(std::move(cfg)) {
  cfg_.validate();
}

MfmcReport MfmcEvaluator::report(const Vector& theta) const {
  return mfmc_estimate(dataset_, policy_, theta, cfg_);
}

Evaluation MfmcEvaluator::evaluate(const Vector& theta) const {
  const auto r = report(theta);
  return {r.j_hat, r.v_hat};
}

}  // namespace mcps
