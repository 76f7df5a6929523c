#include "mcps/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>
#include <utility>

#include "mcps/csv.hpp"

namespace mcps {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  h = mix(h ^ mix(stream_a + 0x632BE59BD9B4E019ull));
  h = mix(h ^ mix(stream_b + 0x8CB92BA72F3D8DD7ull));
  return h;
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(derive_seed(seed, stream)) {}

double SeededRng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double SeededRng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double SeededRng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

double SeededRng::rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }

// ---------------------------------------------------------------------------

double FactorNorm::operator()(std::span<const double> a, std::span<const double> b) const {
  const bool weighted = !weights.empty();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double g = std::abs(a[i] - b[i]);
    if (weighted) g *= weights[i];
    switch (kind) {
      case Norm::L1: acc += g; break;
      case Norm::L2: acc += g * g; break;
      case Norm::LInf: acc = std::max(acc, g); break;
    }
  }
  return kind == Norm::L2 ? std::sqrt(acc) : acc;
}

namespace {

void check_factor(const FactorNorm& norm, int dim, const char* what) {
  if (norm.weights.empty()) return;
  if (static_cast<int>(norm.weights.size()) != dim) {
    throw InputError(std::string("metric: ") + what + " weight count does not match dimension");
  }
  for (double w : norm.weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InputError(std::string("metric: ") + what + " weights must be finite and >= 0");
    }
  }
}

// Symmetry, non-negativity and identity on random probes.
void probe_metric(const StateActionMetric& metric, int dx, int du) {
  SeededRng rng(0x5EEDull, 0);
  std::vector<double> x1(dx), x2(dx), u1(du), u2(du);
  for (int k = 0; k < 32; ++k) {
    for (auto& v : x1) v = rng.uniform(-10.0, 10.0);
    for (auto& v : x2) v = rng.uniform(-10.0, 10.0);
    for (auto& v : u1) v = rng.uniform(-10.0, 10.0);
    for (auto& v : u2) v = rng.uniform(-10.0, 10.0);
    const double ab = metric(x1, u1, x2, u2);
    const double ba = metric(x2, u2, x1, u1);
    const double aa = metric(x1, u1, x1, u1);
    if (!(ab >= 0.0) || ab != ba || aa != 0.0) {
      throw InputError("metric: failed symmetry/identity probe");
    }
  }
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

BatchDataset::BatchDataset(int state_dim, int action_dim,
                           const std::vector<Transition>& transitions, StateActionMetric metric)
    : state_dim_(state_dim), action_dim_(action_dim), metric_(std::move(metric)) {
  if (state_dim < 1 || action_dim < 1) throw InputError("dataset: dimensions must be >= 1");
  check_factor(metric_.state, state_dim, "state");
  check_factor(metric_.action, action_dim, "action");
  probe_metric(metric_, state_dim, action_dim);

  const std::size_t n = transitions.size();
  states_.reserve(n * state_dim);
  actions_.reserve(n * action_dim);
  successors_.reserve(n * state_dim);
  costs_.reserve(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto& tr = transitions[l];
    if (tr.x.size() != state_dim || tr.y.size() != state_dim || tr.u.size() != action_dim) {
      throw InputError("dataset: transition " + std::to_string(l + 1) + " has wrong dimensions");
    }
    if (!all_finite(tr.x) || !all_finite(tr.y) || !all_finite(tr.u) || !std::isfinite(tr.c)) {
      throw InputError("dataset: transition " + std::to_string(l + 1) + " has non-finite entries");
    }
    states_.insert(states_.end(), tr.x.data(), tr.x.data() + state_dim);
    actions_.insert(actions_.end(), tr.u.data(), tr.u.data() + action_dim);
    successors_.insert(successors_.end(), tr.y.data(), tr.y.data() + state_dim);
    costs_.push_back(tr.c);
  }
}

Transition BatchDataset::transition(std::size_t row) const {
  Transition tr;
  const auto x = state(row), u = action(row), y = successor(row);
  tr.x = Eigen::Map<const Vector>(x.data(), state_dim_);
  tr.u = Eigen::Map<const Vector>(u.data(), action_dim_);
  tr.y = Eigen::Map<const Vector>(y.data(), state_dim_);
  tr.c = costs_[row];
  tr.index = row + 1;
  return tr;
}

double BatchDataset::min_cost() const {
  if (empty()) throw InputError("dataset: empty");
  return *std::min_element(costs_.begin(), costs_.end());
}

double BatchDataset::max_cost() const {
  if (empty()) throw InputError("dataset: empty");
  return *std::max_element(costs_.begin(), costs_.end());
}

double metric_distance(const BatchDataset& dataset, const Vector& x_a, const Vector& u_a,
                       const Vector& x_b, const Vector& u_b) {
  if (x_a.size() != dataset.state_dim() || x_b.size() != dataset.state_dim() ||
      u_a.size() != dataset.action_dim() || u_b.size() != dataset.action_dim()) {
    throw InputError("metric_distance: dimension mismatch");
  }
  return dataset.metric()(as_span(x_a), as_span(u_a), as_span(x_b), as_span(u_b));
}

// ---------------------------------------------------------------------------
// Dataset CSV

void write_dataset_csv(std::ostream& out, const BatchDataset& dataset) {
  std::vector<std::string> header;
  for (int i = 0; i < dataset.state_dim(); ++i) header.push_back("x_" + std::to_string(i));
  for (int i = 0; i < dataset.action_dim(); ++i) header.push_back("u_" + std::to_string(i));
  header.emplace_back("c");
  for (int i = 0; i < dataset.state_dim(); ++i) header.push_back("y_" + std::to_string(i));
  csv::write_row(out, header);

  std::vector<std::string> row;
  for (std::size_t l = 0; l < dataset.size(); ++l) {
    row.clear();
    for (double v : dataset.state(l)) row.push_back(csv::format(v));
    for (double v : dataset.action(l)) row.push_back(csv::format(v));
    row.push_back(csv::format(dataset.cost(l)));
    for (double v : dataset.successor(l)) row.push_back(csv::format(v));
    csv::write_row(out, row);
  }
}

void write_dataset_csv(const std::string& path, const BatchDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  write_dataset_csv(out, dataset);
}

BatchDataset read_dataset_csv(std::istream& in, StateActionMetric metric) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("dataset csv: missing header");
  const auto header = csv::split(line);

  int dx = 0, du = 0, dy = 0, nc = 0;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& h = header[i];
    // Columns must appear in the canonical order x.., u.., c, y..
    const std::string expect_x = "x_" + std::to_string(dx);
    const std::string expect_u = "u_" + std::to_string(du);
    const std::string expect_y = "y_" + std::to_string(dy);
    if (du == 0 && nc == 0 && h == expect_x) {
      ++dx;
    } else if (nc == 0 && dx > 0 && h == expect_u) {
      ++du;
    } else if (nc == 0 && du > 0 && h == "c") {
      ++nc;
    } else if (nc == 1 && h == expect_y) {
      ++dy;
    } else {
      throw InputError("dataset csv: unexpected header column '" + h + "'");
    }
  }
  if (dx == 0 || du == 0 || nc != 1 || dy != dx) {
    throw InputError("dataset csv: header must be x_0..,u_0..,c,y_0..");
  }

  std::vector<Transition> transitions;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      throw InputError("dataset csv: line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    Transition tr;
    tr.x.resize(dx);
    tr.u.resize(du);
    tr.y.resize(dx);
    std::size_t k = 0;
    for (int i = 0; i < dx; ++i) tr.x[i] = csv::parse_double(fields[k++]);
    for (int i = 0; i < du; ++i) tr.u[i] = csv::parse_double(fields[k++]);
    tr.c = csv::parse_double(fields[k++]);
    for (int i = 0; i < dx; ++i) tr.y[i] = csv::parse_double(fields[k++]);
    tr.index = transitions.size() + 1;
    transitions.push_back(std::move(tr));
  }
  return BatchDataset(dx, du, transitions, std::move(metric));
}

BatchDataset read_dataset_csv(const std::string& path, StateActionMetric metric) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset: " + path);
  return read_dataset_csv(in, std::move(metric));
}

// ---------------------------------------------------------------------------
// Parameter box and policies

ParameterBox ParameterBox::uniform(int dim, double lo, double hi) {
  ParameterBox box{Vector::Constant(dim, lo), Vector::Constant(dim, hi)};
  box.validate();
  return box;
}

ParameterBox ParameterBox::unbounded(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return {Vector::Constant(dim, -inf), Vector::Constant(dim, inf)};
}

void ParameterBox::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw InputError("box: bounds must be nonempty and of equal size");
  }
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw InputError("box: coordinate " + std::to_string(i) + " has an empty interval");
    }
  }
}

bool ParameterBox::contains(const Vector& theta) const {
  if (theta.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!(theta[i] >= lower[i] && theta[i] <= upper[i])) return false;
  }
  return true;
}

ParameterBox ParameterBox::widened(double margin) const {
  return {lower.array() - margin, upper.array() + margin};
}

PolicySpec::PolicySpec(PolicyKind kind, int state_dim, int action_dim, int features, FeatureFn phi,
                       ParameterBox box)
    : kind_(kind),
      state_dim_(state_dim),
      action_dim_(action_dim),
      features_(features),
      phi_(std::move(phi)),
      box_(std::move(box)) {
  if (state_dim < 1 || action_dim < 1 || features < 1) {
    throw InputError("policy: dimensions must be >= 1");
  }
  box_.validate();
  if (box_.dim() != param_dim()) {
    throw InputError("policy: box dimension " + std::to_string(box_.dim()) +
                     " does not match parameter dimension " + std::to_string(param_dim()));
  }
}

PolicySpec PolicySpec::linear(int state_dim, int action_dim, ParameterBox box) {
  return {PolicyKind::Linear, state_dim, action_dim, state_dim, nullptr, std::move(box)};
}

PolicySpec PolicySpec::affine(int state_dim, int action_dim, ParameterBox box) {
  return {PolicyKind::Affine, state_dim, action_dim, state_dim + 1, nullptr, std::move(box)};
}

PolicySpec PolicySpec::feature_map(int state_dim, int action_dim, int features, FeatureFn phi,
                                   ParameterBox box) {
  if (!phi) throw InputError("policy: feature map must be callable");
  return {PolicyKind::FeatureMap, state_dim, action_dim, features, std::move(phi), std::move(box)};
}

PolicySpec PolicySpec::with_box(ParameterBox box) const {
  PolicySpec copy = *this;
  box.validate();
  if (box.dim() != param_dim()) throw InputError("policy: box dimension mismatch");
  copy.box_ = std::move(box);
  return copy;
}

void PolicySpec::check_theta(const Vector& theta) const {
  if (theta.size() != param_dim()) {
    throw InputError("policy: theta has dimension " + std::to_string(theta.size()) +
                     ", expected " + std::to_string(param_dim()));
  }
  if (!box_.contains(theta)) throw InputError("policy: theta outside the parameter box");
}

Vector PolicySpec::features_of(const Vector& x) const {
  switch (kind_) {
    case PolicyKind::Linear: return x;
    case PolicyKind::Affine: {
      Vector f(state_dim_ + 1);
      f.head(state_dim_) = x;
      f[state_dim_] = 1.0;
      return f;
    }
    case PolicyKind::FeatureMap: {
      Vector f = phi_(x);
      if (f.size() != features_) throw InputError("policy: feature map returned wrong size");
      return f;
    }
  }
  return x;
}

Vector PolicySpec::action(const Vector& theta, const Vector& x) const {
  check_theta(theta);
  if (x.size() != state_dim_) throw InputError("policy: state dimension mismatch");
  const Vector f = features_of(x);
  Vector u(action_dim_);
  for (int a = 0; a < action_dim_; ++a) {
    u[a] = theta.segment(static_cast<Eigen::Index>(a) * features_, features_).dot(f);
  }
  return u;
}

}  // namespace mcps
