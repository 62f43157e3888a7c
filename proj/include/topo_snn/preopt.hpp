#pragma once

// Position pre-optimization: simulated annealing over coordinate swaps that
// raises J = Pearson(r, d), the correlation between pairwise response
// similarity and inverse distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/sheet.hpp"
#include "topo_snn/stats.hpp"

namespace topo {

struct PreoptConfig {
  std::size_t levels = 20;  // temperature levels; 0 leaves the sheet untouched
  double t0 = 0.01;
  double decay = 0.7;
  std::size_t proposals_per_unit = 10;
  std::size_t max_pairs = 200000;  // all pairs when C(N,2) fits, otherwise a seeded sample
  std::uint64_t seed = 0;
  bool record_trace = false;  // J after every proposal
};

struct PreoptResult {
  CorticalSheet sheet;
  double j_initial = 0.0;
  double j_final = 0.0;
  std::size_t accepted = 0;
  std::vector<double> level_j;      // J at the end of each level
  std::vector<double> temperatures; // temperature of each level, last is 0
  std::vector<double> trace;        // per-proposal J when record_trace
};

// Temperature of level k out of `levels`: t0 * decay^k, with the last level frozen at 0.
inline double preopt_temperature(const PreoptConfig& cfg, std::size_t k) {
  if (k + 1 >= cfg.levels) return 0.0;
  return cfg.t0 * std::pow(cfg.decay, static_cast<double>(k));
}

// Row-wise Pearson similarity of two response vectors.
inline double response_similarity(const std::vector<std::vector<double>>& responses, std::size_t i,
                                  std::size_t j) {
  return stats::pearson(responses[i], responses[j]).value;
}

// J over all pairs of the sheet, computed directly.
inline double preopt_objective(const CorticalSheet& sheet, const std::vector<std::vector<double>>& responses) {
  TOPO_REQUIRE(responses.size() == sheet.size(), "preopt_objective: one response row per unit required");
  std::vector<double> r, d;
  for (std::size_t i = 0; i < sheet.size(); ++i)
    for (std::size_t j = i + 1; j < sheet.size(); ++j) {
      r.push_back(response_similarity(responses, i, j));
      d.push_back(1.0 / (kInverseDistanceSoftening + sheet.distance(i, j)));
    }
  if (r.size() < 2) return 0.0;
  return stats::pearson(r, d).value;
}

namespace preopt_detail {

// Running sums for Pearson(r, d) over a fixed pair set, where only d moves.
struct Sums {
  double n = 0, sr = 0, srr = 0, sd = 0, sdd = 0, srd = 0;

  double pearson() const {
    const double cov = srd - sr * sd / n;
    const double vr = srr - sr * sr / n;
    const double vd = sdd - sd * sd / n;
    if (!(vr > 0.0) || !(vd > 0.0)) return 0.0;
    const double p = cov / std::sqrt(vr * vd);
    return std::clamp(p, -1.0, 1.0);
  }
};

struct PairSet {
  std::vector<std::size_t> a, b;
  std::vector<double> r, d;
  std::vector<std::vector<std::size_t>> touching;  // pair ids per unit

  Sums sums() const {
    Sums s;
    s.n = static_cast<double>(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) {
      s.sr += r[k];
      s.srr += r[k] * r[k];
      s.sd += d[k];
      s.sdd += d[k] * d[k];
      s.srd += r[k] * d[k];
    }
    return s;
  }
};

inline double inv(const CorticalSheet& s, std::size_t i, std::size_t j) {
  return 1.0 / (kInverseDistanceSoftening + s.distance(i, j));
}

inline PairSet build_pairs(const CorticalSheet& sheet, const std::vector<std::vector<double>>& responses,
                           std::size_t max_pairs, Rng& rng) {
  const std::size_t n = sheet.size();
  PairSet ps;
  ps.touching.resize(n);
  auto add = [&](std::size_t i, std::size_t j) {
    ps.touching[i].push_back(ps.a.size());
    ps.touching[j].push_back(ps.a.size());
    ps.a.push_back(i);
    ps.b.push_back(j);
    ps.r.push_back(response_similarity(responses, i, j));
    ps.d.push_back(inv(sheet, i, j));
  };
  const std::size_t total = n * (n - 1) / 2;
  if (total <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) add(i, j);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < max_pairs; ++k) {
      std::size_t i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      add(std::min(i, j), std::max(i, j));
    }
  }
  return ps;
}

}  // namespace preopt_detail

inline PreoptResult preoptimize_positions(const CorticalSheet& sheet,
                                          const std::vector<std::vector<double>>& responses,
                                          const PreoptConfig& cfg) {
  if (responses.size() != sheet.size())
    throw ConfigError("response matrix has " + std::to_string(responses.size()) + " rows for " +
                      std::to_string(sheet.size()) + " units");
  for (const auto& row : responses)
    if (row.size() != responses.front().size() || row.size() < 2)
      throw ConfigError("response rows must share one length of at least 2 stimuli");
  if (cfg.levels > 0 && !(cfg.decay > 0.0 && cfg.decay < 1.0 && cfg.t0 >= 0.0))
    throw ConfigError("annealing schedule needs t0 >= 0 and 0 < decay < 1");

  PreoptResult out;
  out.sheet = sheet;
  const std::size_t n = sheet.size();
  if (cfg.levels == 0 || n < 3) {
    out.j_initial = out.j_final = n < 3 ? 0.0 : preopt_objective(sheet, responses);
    return out;
  }

  Rng pair_rng(derive_seed(cfg.seed, "preopt-pairs", 0));
  auto ps = preopt_detail::build_pairs(out.sheet, responses, cfg.max_pairs, pair_rng);
  auto sums = ps.sums();
  double j = sums.pearson();
  out.j_initial = j;

  std::vector<std::size_t> moved;
  std::vector<double> old_d;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  for (std::size_t level = 0; level < cfg.levels; ++level) {
    const double temp = preopt_temperature(cfg, level);
    out.temperatures.push_back(temp);
    Rng rng(derive_seed(cfg.seed, "preopt-anneal", level));
    const std::size_t proposals = cfg.proposals_per_unit * n;
    for (std::size_t p = 0; p < proposals; ++p) {
      const std::size_t u = pick(rng);
      std::size_t v = pick(rng);
      while (v == u) v = pick(rng);
      const double coin = uniform01(rng);

      out.sheet.swap_units(u, v);
      moved.clear();
      old_d.clear();
      auto cand = sums;
      for (std::size_t unit : {u, v})
        for (std::size_t k : ps.touching[unit]) {
          // The u-v pair itself keeps its distance; skip the second visit.
          if (unit == v && (ps.a[k] == u || ps.b[k] == u)) continue;
          const double nd = preopt_detail::inv(out.sheet, ps.a[k], ps.b[k]);
          cand.sd += nd - ps.d[k];
          cand.sdd += nd * nd - ps.d[k] * ps.d[k];
          cand.srd += ps.r[k] * (nd - ps.d[k]);
          moved.push_back(k);
          old_d.push_back(ps.d[k]);
          ps.d[k] = nd;
        }
      const double cand_j = cand.pearson();
      const double delta = cand_j - j;
      const bool accept = delta >= 0.0 || (temp > 0.0 && coin < std::exp(delta / temp));
      if (accept) {
        sums = cand;
        j = cand_j;
        ++out.accepted;
      } else {
        out.sheet.swap_units(u, v);
        for (std::size_t m = 0; m < moved.size(); ++m) ps.d[moved[m]] = old_d[m];
      }
      if (cfg.record_trace) out.trace.push_back(j);
    }
    // Re-anchor the running sums to limit drift.
    sums = ps.sums();
    j = sums.pearson();
    out.level_j.push_back(j);
  }
  out.j_final = j;
  return out;
}

}  // namespace topo
