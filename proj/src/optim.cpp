#include "mcps/optim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <ostream>
#include <string>

#include "mcps/csv.hpp"

namespace mcps {

double StepSchedule::operator()(long t) const {
  if (t < 1) throw InputError("step schedule: t is 1-based");
  if (kind == Kind::Harmonic) return a0 / static_cast<double>(t);
  return a0 / std::pow(static_cast<double>(t), kappa);
}

void StepSchedule::validate() const {
  if (!(a0 > 0.0) || !std::isfinite(a0)) throw InputError("step schedule: a0 must be positive");
  if (kind == Kind::Harmonic && kappa != 1.0) {
    throw InputError("step schedule: harmonic schedule has kappa = 1");
  }
  if (!(kappa > 0.5 && kappa <= 1.0)) {
    throw InputError("step schedule: kappa must lie in (0.5, 1]");
  }
}

bool timescales_separated(const StepSchedule& fast, const StepSchedule& slow) {
  if (slow.kappa > fast.kappa) return true;
  return slow.kappa == fast.kappa && slow.a0 < fast.a0;
}

// ---------------------------------------------------------------------------

Vector project_box(const Vector& theta, const ParameterBox& box) {
  if (theta.size() != box.dim()) throw InputError("project_box: dimension mismatch");
  return theta.cwiseMax(box.lower).cwiseMin(box.upper);
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> symmetric_eigen(const Matrix& S, const char* op) {
  if (S.rows() != S.cols() || S.rows() == 0) {
    throw InputError(std::string(op) + ": matrix must be square and nonempty");
  }
  if (!S.allFinite()) throw InputError(std::string(op) + ": non-finite entries");
  const Matrix sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw InputError(std::string(op) + ": eigensolver failed");
  return es;
}

void check_omega(double omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw InputError("omega must be positive");
}

}  // namespace

Matrix project_psd(const Matrix& H, double omega) {
  check_omega(omega);
  if (H.size() == 1) {
    if (!std::isfinite(H(0, 0))) throw InputError("project_psd: non-finite entries");
    return Matrix::Constant(1, 1, std::max(H(0, 0), omega));
  }
  const auto es = symmetric_eigen(H, "project_psd");
  const Vector clamped = es.eigenvalues().cwiseMax(omega);
  Matrix out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Matrix projected_inverse(const Matrix& H, double omega) {
  check_omega(omega);
  if (H.size() == 1) {
    if (!std::isfinite(H(0, 0))) throw InputError("project_psd: non-finite entries");
    return Matrix::Constant(1, 1, 1.0 / std::max(H(0, 0), omega));
  }
  const auto es = symmetric_eigen(H, "project_psd");
  const Vector inv = es.eigenvalues().cwiseMax(omega).cwiseInverse();
  Matrix out = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

Matrix project_inverse(const Matrix& M, double omega) {
  check_omega(omega);
  const double cap = 1.0 / omega;
  auto clamp = [cap](double m) { return (m > 0.0 && m <= cap) ? m : cap; };
  if (M.size() == 1) {
    if (!std::isfinite(M(0, 0))) throw InputError("project_inverse: non-finite entries");
    return Matrix::Constant(1, 1, clamp(M(0, 0)));
  }
  const auto es = symmetric_eigen(M, "project_inverse");
  const Vector vals = es.eigenvalues().unaryExpr(clamp);
  Matrix out = es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

double min_eigenvalue(const Matrix& S) {
  if (S.size() == 1) return S(0, 0);
  return symmetric_eigen(S, "min_eigenvalue").eigenvalues().minCoeff();
}

Matrix woodbury_update(const Matrix& M, double a, double b, double C, const Vector& U,
                       const Vector& V) {
  const Eigen::Index n = M.rows();
  if (M.cols() != n || U.size() != n || V.size() != n) {
    throw InputError("woodbury_update: dimension mismatch");
  }
  if (std::abs(1.0 - a) <= 1e-10) {
    throw DegenerateUpdateError("woodbury_update: step size a(t) = 1 leaves a rank-one Hessian");
  }
  const double denom = 1.0 - b + C * V.dot(M * U);
  if (std::abs(denom) <= 1e-10 || !std::isfinite(denom)) {
    throw DegenerateUpdateError("woodbury_update: vanishing denominator");
  }
  const Matrix correction = (C / denom) * (U * (V.transpose() * M));
  return (M / (1.0 - a)) * (Matrix::Identity(n, n) - correction);
}

// ---------------------------------------------------------------------------

void RiskConfig::validate(const StepSchedule& fast) const {
  if (!(alpha >= 0.0)) throw InputError("risk: alpha must be non-negative");
  if (!(lambda_max > 0.0) || !std::isfinite(lambda_max)) {
    throw InputError("risk: lambda_max must be positive and finite");
  }
  if (!(lambda0 >= 0.0 && lambda0 <= lambda_max)) {
    throw InputError("risk: lambda0 must lie in [0, lambda_max]");
  }
  b_schedule.validate();
  if (!timescales_separated(fast, b_schedule)) {
    throw InputError("risk: the multiplier schedule b(t) must be slower than a(t)");
  }
}

void StepConfig::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InputError("delta must be positive");
  schedule.validate();
  box.validate();
  check_omega(omega);
  if (woodbury_b) woodbury_b->validate();
}

OptimizerState OptimizerState::initial(const Vector& theta0, const StepConfig& cfg, SeededRng rng,
                                       std::optional<double> woodbury_k) {
  if (theta0.size() != cfg.box.dim()) throw InputError("initial theta: dimension mismatch");
  if (!cfg.box.contains(theta0)) throw InputError("initial theta: outside the box");
  const Eigen::Index n = theta0.size();
  OptimizerState s;
  s.t = 1;
  s.theta = theta0;
  s.theta_bar = theta0;
  s.H = cfg.omega * Matrix::Identity(n, n);
  const double k = woodbury_k.value_or(1.0 / cfg.omega);
  if (!(k > 0.0)) throw InputError("initial inverse scale k must be positive");
  s.M = k * Matrix::Identity(n, n);
  s.lambda = cfg.risk.lambda0;
  s.rng = std::move(rng);
  return s;
}

void OptimizerState::advance_unchanged() {
  theta_bar += (theta - theta_bar) / static_cast<double>(t + 1);
  ++t;
}

namespace {

void commit_theta(OptimizerState& s, Vector next) {
  s.theta = std::move(next);
  s.theta_bar += (s.theta - s.theta_bar) / static_cast<double>(s.t + 1);
  ++s.t;
}

/// J + lambda V; requires the inner evaluator to report a variance.
class LagrangianEvaluator final : public Evaluator {
 public:
  LagrangianEvaluator(const Evaluator& inner, double lambda) : inner_(inner), lambda_(lambda) {}

  Evaluation evaluate(const Vector& theta) const override {
    Evaluation e = inner_.evaluate(theta);
    if (!e.v) throw DomainError("risk variant: evaluator provides no variance (need p >= 2)");
    if (lambda_ != 0.0) e.j += lambda_ * *e.v;
    return e;
  }

 private:
  const Evaluator& inner_;
  double lambda_;
};

double multiplier_step(const OptimizerState& s, const Evaluator& eval, const StepConfig& cfg,
                       StepRecord& rec) {
  const Evaluation nominal = eval.evaluate(s.theta);
  if (!nominal.v) throw DomainError("risk variant: evaluator provides no variance (need p >= 2)");
  rec.v_nominal = nominal.v;
  const double b = cfg.risk.b_schedule(s.t);
  return std::clamp(s.lambda + b * (*nominal.v - cfg.risk.alpha), 0.0, cfg.risk.lambda_max);
}

// Shared Newton update; returns the proposed (H, M) without committing.
struct NewtonProposal {
  Matrix H;
  Matrix M;
  Vector g;
  StepRecord rec;
};

NewtonProposal newton_proposal(OptimizerState& s, const Evaluator& eval,
                               PerturbationKind kind, const StepConfig& cfg) {
  const Eigen::Index n = s.theta.size();
  NewtonProposal p;
  const double a = cfg.schedule(s.t);
  Matrix sample;
  if (kind == PerturbationKind::Rademacher) {
    const Vector Delta = sample_perturbation(kind, static_cast<int>(n), s.rng);
    const Vector DeltaHat = sample_perturbation(kind, static_cast<int>(n), s.rng);
    sample = spsa_hessian_sample(eval, s.theta, cfg.delta, Delta, DeltaHat).H;
    const auto grad = spsa_gradient(eval, s.theta, cfg.delta, Delta);
    p.g = grad.g;
    p.rec.j_plus = grad.j_plus;
    p.rec.j_minus = grad.j_minus;
  } else {
    const Vector Delta = sample_perturbation(kind, static_cast<int>(n), s.rng);
    sample = sf_hessian_sample(eval, s.theta, cfg.delta, Delta, cfg.sf_literal_scaling).H;
    const auto grad = sf_gradient(eval, s.theta, cfg.delta, Delta);
    p.g = grad.g;
    p.rec.j_plus = grad.j_plus;
    p.rec.j_minus = grad.j_minus;
  }
  p.H = s.H + a * (sample - s.H);
  // Upper triangle is authoritative.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) p.H(i, j) = p.H(j, i);
  p.M = projected_inverse(p.H, cfg.omega);
  p.rec.h_min_eig = min_eigenvalue(project_psd(p.H, cfg.omega));
  return p;
}

}  // namespace

StepRecord mcpg_step(OptimizerState& state, const Evaluator& eval, PerturbationKind kind,
                     const StepConfig& cfg) {
  const double a = cfg.schedule(state.t);
  const Vector Delta = sample_perturbation(kind, static_cast<int>(state.theta.size()), state.rng);
  const GradEstimate grad = kind == PerturbationKind::Rademacher
                                ? spsa_gradient(eval, state.theta, cfg.delta, Delta)
                                : sf_gradient(eval, state.theta, cfg.delta, Delta);
  StepRecord rec;
  rec.j_plus = grad.j_plus;
  rec.j_minus = grad.j_minus;
  commit_theta(state, project_box(state.theta - a * grad.g, cfg.box));
  return rec;
}

StepRecord mcpn_step(OptimizerState& state, const Evaluator& eval, PerturbationKind kind,
                     const StepConfig& cfg) {
  const double a = cfg.schedule(state.t);
  NewtonProposal p = newton_proposal(state, eval, kind, cfg);
  Vector next = project_box(state.theta - a * (p.M * p.g), cfg.box);
  state.H = std::move(p.H);
  state.M = std::move(p.M);
  commit_theta(state, std::move(next));
  return p.rec;
}

StepRecord woodbury_step(OptimizerState& state, const Evaluator& eval, const StepConfig& cfg) {
  const Eigen::Index n = state.theta.size();
  const double a = cfg.schedule(state.t);
  const double b = cfg.woodbury_b ? (*cfg.woodbury_b)(state.t) : a;
  const Vector Delta = sample_perturbation(PerturbationKind::Rademacher, static_cast<int>(n), state.rng);
  const Vector DeltaHat =
      sample_perturbation(PerturbationKind::Rademacher, static_cast<int>(n), state.rng);

  const HessEstimate hs = spsa_hessian_sample(eval, state.theta, cfg.delta, Delta, DeltaHat);
  const GradEstimate grad = spsa_gradient(eval, state.theta, cfg.delta, Delta);

  const double C = b * (hs.j_a - hs.j_b);
  const Vector U = (cfg.delta * Delta).cwiseInverse();
  const Vector V = (cfg.delta * DeltaHat).cwiseInverse();
  Matrix M = project_inverse(woodbury_update(state.M, a, b, C, U, V), cfg.omega);

  StepRecord rec;
  rec.j_plus = grad.j_plus;
  rec.j_minus = grad.j_minus;
  rec.h_min_eig = 1.0 / symmetric_eigen(M, "woodbury_step").eigenvalues().maxCoeff();

  Vector next = project_box(state.theta - a * (M * grad.g), cfg.box);
  state.M = std::move(M);
  commit_theta(state, std::move(next));
  return rec;
}

StepRecord risk_mcpg_step(OptimizerState& state, const Evaluator& eval, const StepConfig& cfg) {
  const double a = cfg.schedule(state.t);
  const LagrangianEvaluator lagrangian(eval, state.lambda);
  const Vector Delta =
      sample_perturbation(PerturbationKind::Rademacher, static_cast<int>(state.theta.size()), state.rng);
  const GradEstimate grad = spsa_gradient(lagrangian, state.theta, cfg.delta, Delta);

  StepRecord rec;
  rec.j_plus = grad.j_plus;
  rec.j_minus = grad.j_minus;
  const double next_lambda = multiplier_step(state, eval, cfg, rec);
  Vector next = project_box(state.theta - a * grad.g, cfg.box);
  state.lambda = next_lambda;
  commit_theta(state, std::move(next));
  return rec;
}

StepRecord risk_mcpn_step(OptimizerState& state, const Evaluator& eval, const StepConfig& cfg) {
  const double a = cfg.schedule(state.t);
  const LagrangianEvaluator lagrangian(eval, state.lambda);
  NewtonProposal p = newton_proposal(state, lagrangian, PerturbationKind::Rademacher, cfg);
  const double next_lambda = multiplier_step(state, eval, cfg, p.rec);
  Vector next = project_box(state.theta - a * (p.M * p.g), cfg.box);
  state.H = std::move(p.H);
  state.M = std::move(p.M);
  state.lambda = next_lambda;
  commit_theta(state, std::move(next));
  return p.rec;
}

// ---------------------------------------------------------------------------

namespace {

struct AlgorithmInfo {
  Algorithm alg;
  std::string_view name;
  int calls;
  PerturbationKind kind;
};

constexpr std::array<AlgorithmInfo, 7> kAlgorithms{{
    {Algorithm::McpgSpsa, "mcpg-spsa", 2, PerturbationKind::Rademacher},
    {Algorithm::McpgSf, "mcpg-sf", 2, PerturbationKind::Gaussian},
    {Algorithm::McpnSpsa, "mcpn-spsa", 4, PerturbationKind::Rademacher},
    {Algorithm::McpnSf, "mcpn-sf", 4, PerturbationKind::Gaussian},
    {Algorithm::McpnWoodbury, "mcpn-woodbury", 4, PerturbationKind::Rademacher},
    {Algorithm::RiskMcpg, "risk-mcpg", 3, PerturbationKind::Rademacher},
    {Algorithm::RiskMcpn, "risk-mcpn", 5, PerturbationKind::Rademacher},
}};

const AlgorithmInfo& info(Algorithm alg) {
  for (const auto& i : kAlgorithms)
    if (i.alg == alg) return i;
  throw InputError("unknown algorithm");
}

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPerturbStream = 2;

}  // namespace

std::string_view algorithm_name(Algorithm alg) { return info(alg).name; }

Algorithm parse_algorithm(std::string_view name) {
  for (const auto& i : kAlgorithms)
    if (i.name == name) return i.alg;
  throw InputError("unknown algorithm '" + std::string(name) + "'");
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> algs = [] {
    std::vector<Algorithm> v;
    for (const auto& i : kAlgorithms) v.push_back(i.alg);
    return v;
  }();
  return algs;
}

int calls_per_iteration(Algorithm alg) { return info(alg).calls; }

PerturbationKind perturbation_kind(Algorithm alg) { return info(alg).kind; }

double evaluation_margin(Algorithm alg, double delta) {
  if (perturbation_kind(alg) == PerturbationKind::Gaussian) {
    return std::numeric_limits<double>::infinity();
  }
  // theta + delta + delta can round one ulp past the widened edge.
  return 2.0 * delta + 1e-9;
}

Vector initial_theta(const ParameterBox& box, std::uint64_t seed) {
  box.validate();
  if (!box.lower.allFinite() || !box.upper.allFinite()) {
    throw InputError("initial theta: cannot draw uniformly from an unbounded box");
  }
  SeededRng rng(seed, kInitStream);
  Vector theta(box.dim());
  for (int i = 0; i < box.dim(); ++i) theta[i] = rng.uniform(box.lower[i], box.upper[i]);
  return theta;
}

Trace run_optimizer(const OptimizerConfig& config, const Evaluator& eval, int iterations) {
  if (iterations < 1) throw InputError("run_optimizer: iterations must be >= 1");
  config.step.validate();
  const Algorithm alg = config.algorithm;
  if (alg == Algorithm::RiskMcpg || alg == Algorithm::RiskMcpn) {
    config.step.risk.validate(config.step.schedule);
  }

  Trace trace;
  trace.algorithm = alg;
  trace.seed = config.seed;
  trace.theta0 = config.theta0 ? *config.theta0 : initial_theta(config.step.box, config.seed);
  OptimizerState state = OptimizerState::initial(trace.theta0, config.step,
                                                 SeededRng(config.seed, kPerturbStream),
                                                 config.woodbury_k);
  trace.rows.reserve(iterations);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int it = 0; it < iterations; ++it) {
    StepRecord rec;
    bool ok = true;
    try {
      switch (alg) {
        case Algorithm::McpgSpsa:
        case Algorithm::McpgSf:
          rec = mcpg_step(state, eval, perturbation_kind(alg), config.step);
          break;
        case Algorithm::McpnSpsa:
        case Algorithm::McpnSf:
          rec = mcpn_step(state, eval, perturbation_kind(alg), config.step);
          break;
        case Algorithm::McpnWoodbury: rec = woodbury_step(state, eval, config.step); break;
        case Algorithm::RiskMcpg: rec = risk_mcpg_step(state, eval, config.step); break;
        case Algorithm::RiskMcpn: rec = risk_mcpn_step(state, eval, config.step); break;
      }
    } catch (const std::exception&) {
      ok = false;
      if (++trace.failed_steps > config.error_budget) throw;
      state.advance_unchanged();
      rec.j_plus = nan;
      rec.j_minus = nan;
    }
    TraceRow row;
    row.t = state.t - 1;
    row.theta = state.theta;
    row.theta_bar = state.theta_bar;
    row.j_plus = rec.j_plus;
    row.j_minus = rec.j_minus;
    row.lambda = state.lambda;
    row.h_min_eig = rec.h_min_eig;
    row.ok = ok;
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
  const Eigen::Index n = trace.theta0.size();
  out << "# algorithm=" << algorithm_name(trace.algorithm) << " seed=" << trace.seed << " theta0=";
  for (Eigen::Index i = 0; i < n; ++i) out << (i ? ";" : "") << csv::format(trace.theta0[i]);
  out << " failed_steps=" << trace.failed_steps << '\n';

  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("theta_" + std::to_string(i));
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("theta_bar_" + std::to_string(i));
  for (const char* h : {"j_plus", "j_minus", "lambda", "h_min_eig"}) header.emplace_back(h);
  csv::write_row(out, header);

  std::vector<std::string> fields;
  for (const auto& row : trace.rows) {
    fields.clear();
    fields.push_back(std::to_string(row.t));
    for (Eigen::Index i = 0; i < n; ++i) fields.push_back(csv::format(row.theta[i]));
    for (Eigen::Index i = 0; i < n; ++i) fields.push_back(csv::format(row.theta_bar[i]));
    fields.push_back(csv::format(row.j_plus));
    fields.push_back(csv::format(row.j_minus));
    fields.push_back(csv::format(row.lambda));
    fields.push_back(csv::format(row.h_min_eig));
    csv::write_row(out, fields);
  }
}

}  // namespace mcps
