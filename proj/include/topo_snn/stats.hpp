#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "topo_snn/error.hpp"

namespace topo::stats {

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // zero variance in either input; value forced to 0
};

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Pearson's r. Zero variance in either vector yields 0 with the degenerate flag.
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ContractViolation("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                            std::to_string(y.size()));
  if (x.size() < 2) throw ContractViolation("pearson: need at least 2 points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  const double r = sxy / std::sqrt(sxx * syy);
  return {std::clamp(r, -1.0, 1.0), false};
}

// Partial derivatives of pearson(x, y) with respect to x and y. Both outputs
// are zero-filled when the correlation is degenerate.
inline void pearson_grad(std::span<const double> x, std::span<const double> y,
                         std::span<double> dx_out, std::span<double> dy_out) {
  const std::size_t n = x.size();
  std::fill(dx_out.begin(), dx_out.end(), 0.0);
  std::fill(dy_out.begin(), dy_out.end(), 0.0);
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return;
  const double norm = std::sqrt(sxx * syy);
  const double r = sxy / norm;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    dx_out[i] = dy / norm - r * dx / sxx;
    dy_out[i] = dx / norm - r * dy / syy;
  }
}

// Average ranks (ties share the mean rank), 1-based.
inline std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

struct PermutationTest {
  double statistic = 0.0;
  double p_value = 1.0;  // one-sided, P(perm statistic <= observed)
};

// One-sided permutation test for a negative Spearman correlation.
inline PermutationTest spearman_negative_test(std::span<const double> x, std::span<const double> y,
                                              std::size_t permutations, std::uint64_t seed) {
  PermutationTest out;
  out.statistic = spearman(x, y).value;
  std::vector<double> shuffled(y.begin(), y.end());
  std::mt19937_64 rng(seed);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (spearman(x, shuffled).value <= out.statistic) ++hits;
  }
  out.p_value = static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
  return out;
}

// Welch two-sample t statistic (a versus b). Zero variance in both groups gives 0.
inline double welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ContractViolation("welch_t: need >= 2 samples per group");
  const double ma = mean(a), mb = mean(b);
  double va = 0.0, vb = 0.0;
  for (double v : a) va += (v - ma) * (v - ma);
  for (double v : b) vb += (v - mb) * (v - mb);
  va /= static_cast<double>(a.size() - 1);
  vb /= static_cast<double>(b.size() - 1);
  const double se2 = va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size());
  if (se2 <= 0.0) return 0.0;
  return (ma - mb) / std::sqrt(se2);
}

inline double binary_entropy_bits(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

}  // namespace topo::stats
