// Copyright 2026 The mcctc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Independent reference implementations used only by the tests. They favour
// obviousness over speed: exhaustive enumeration, plain recursion, exact
// rational arithmetic and adaptive quadrature.

#ifndef MCCTC_TESTS_ORACLES_H_
#define MCCTC_TESTS_ORACLES_H_

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mcctc::oracle {

// -log sum over every frame-level path that collapses to `target`.
inline double CtcNllByEnumeration(std::span<const double> log_probs, int frames,
                                  int vocab, std::span<const int> target,
                                  int blank) {
  std::vector<int> path(frames, 0);
  double total = 0;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    for (int s : path) {
      if (s != blank && s != prev) collapsed.push_back(s);
      prev = s;
    }
    if (std::equal(collapsed.begin(), collapsed.end(), target.begin(),
                   target.end())) {
      double lp = 0;
      for (int t = 0; t < frames; ++t) lp += log_probs[t * vocab + path[t]];
      total += std::exp(lp);
    }
    int t = frames - 1;
    while (t >= 0 && path[t] == vocab - 1) path[t--] = 0;
    if (t < 0) break;
    ++path[t];
  }
  return -std::log(total);
}

// Top-down recursion over suffixes with memoization.
inline int EditDistanceByRecursion(std::span<const std::string> a,
                                   std::span<const std::string> b) {
  std::vector<int> memo((a.size() + 1) * (b.size() + 1), -1);
  std::function<int(size_t, size_t)> go = [&](size_t i, size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    int& m = memo[i * (b.size() + 1) + j];
    if (m >= 0) return m;
    m = std::min({go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1), go(i + 1, j) + 1,
                  go(i, j + 1) + 1});
    return m;
  };
  return go(0, 0);
}

// Exact two-sided binomial tail at 1/2 with big-integer arithmetic.
inline double McNemarExact(long b, long c) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  const long n = b + c;
  if (n == 0) return 1.0;
  const long k = std::min(b, c);
  cpp_int choose = 1;
  cpp_int tail = 0;
  for (long i = 0; i <= k; ++i) {
    if (i > 0) choose = choose * (n - i + 1) / i;
    tail += choose;
  }
  cpp_rational p(tail * 2, cpp_int(1) << n);
  if (p > 1) return 1.0;
  return static_cast<double>(p);
}

// P(|T| >= |t|) by integrating the Student-t density.
inline double StudentTailByQuadrature(double t, double df) {
  const double log_norm = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) -
                          0.5 * std::log(df * M_PI);
  auto pdf = [&](double x) {
    return std::exp(log_norm - (df + 1) / 2 * std::log1p(x * x / df));
  };
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double upper =
      integrator.integrate(pdf, std::abs(t), std::numeric_limits<double>::infinity());
  return std::min(1.0, 2 * upper);
}

inline std::vector<double> RandomLogProbRows(int rows, int cols,
                                             std::mt19937_64& rng,
                                             double spread = 2.0) {
  std::normal_distribution<double> normal(0.0, spread);
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    double* row = out.data() + static_cast<size_t>(r) * cols;
    double max = -INFINITY;
    for (int c = 0; c < cols; ++c) max = std::max(max, row[c] = normal(rng));
    double z = 0;
    for (int c = 0; c < cols; ++c) z += std::exp(row[c] - max);
    const double lse = max + std::log(z);
    for (int c = 0; c < cols; ++c) row[c] -= lse;
  }
  return out;
}

// Top-n neighbours of `target` by sorting every cosine in long double; ties
// go to the smaller id. Zero vectors are never candidates.
inline std::vector<int> TopNByExhaustiveScan(
    const std::vector<std::vector<double>>& vectors, int target, int n) {
  auto norm = [](const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += static_cast<long double>(x) * x;
    return std::sqrt(s);
  };
  const long double nt = norm(vectors[target]);
  std::vector<std::pair<long double, int>> all;
  for (int y = 0; y < static_cast<int>(vectors.size()); ++y) {
    const long double ny = norm(vectors[y]);
    if (y == target || ny == 0) continue;
    long double dot = 0;
    for (size_t k = 0; k < vectors[y].size(); ++k) {
      dot += static_cast<long double>(vectors[target][k]) * vectors[y][k];
    }
    all.emplace_back(-dot / (nt * ny), y);
  }
  std::sort(all.begin(), all.end());
  std::vector<int> out;
  for (int i = 0; i < n && i < static_cast<int>(all.size()); ++i) {
    out.push_back(all[i].second);
  }
  return out;
}

}  // namespace mcctc::oracle

#endif  // MCCTC_TESTS_ORACLES_H_
