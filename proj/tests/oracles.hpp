#pragma once

// Independent reference implementations used by the tests.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

struct Row {
  std::vector<double> x, u;
  double c;
  std::vector<double> y;
};

struct Result {
  double j = 0.0;
  std::vector<double> returns;
  std::vector<std::vector<std::size_t>> indices;  // 1-based
};

using Policy = std::function<std::vector<double>(const std::vector<double>&)>;

inline double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

// Literal greedy reconstruction: keep a list G of available indices, collect
// the full minimizing set, take its smallest index, then erase it from G.
inline Result brute_force_mfmc(const std::vector<Row>& rows, const Policy& policy,
                               const std::vector<double>& x0, int p, int T, double gamma) {
  std::vector<std::size_t> G;
  for (std::size_t l = 1; l <= rows.size(); ++l) G.push_back(l);
  Result res;
  double total = 0.0;
  for (int i = 0; i < p; ++i) {
    std::vector<double> x = x0;
    double ret = 0.0;
    std::vector<std::size_t> picked;
    for (int t = 0; t < T; ++t) {
      const auto u = policy(x);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t l : G) best = std::fmin(best, l1(rows[l - 1].x, x) + l1(rows[l - 1].u, u));
      std::vector<std::size_t> H;
      for (std::size_t l : G)
        if (l1(rows[l - 1].x, x) + l1(rows[l - 1].u, u) == best) H.push_back(l);
      std::size_t chosen = H[0];
      for (std::size_t l : H) chosen = l < chosen ? l : chosen;
      ret += std::pow(gamma, t) * rows[chosen - 1].c;
      x = rows[chosen - 1].y;
      picked.push_back(chosen);
      for (std::size_t k = 0; k < G.size(); ++k)
        if (G[k] == chosen) {
          G.erase(G.begin() + static_cast<long>(k));
          break;
        }
    }
    res.returns.push_back(ret);
    res.indices.push_back(picked);
    total += ret;
  }
  res.j = total / p;
  return res;
}

// Calls f with every vector in {-1, +1}^n.
inline void for_each_sign_pattern(int n, const std::function<void(const std::vector<double>&)>& f) {
  std::vector<double> s(n);
  for (unsigned long mask = 0; mask < (1ul << n); ++mask) {
    for (int i = 0; i < n; ++i) s[i] = (mask >> i) & 1ul ? 1.0 : -1.0;
    f(s);
  }
}

}  // namespace oracle
