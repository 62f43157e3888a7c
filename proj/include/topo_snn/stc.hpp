#pragma once

// Spatio-temporal constraint loss.
//
// For a cluster of N units on a cortical sheet, every one of the C(N, 2) pairs
// contributes
//   r      Pearson correlation of the two per-trial firing-rate vectors,
//   r_ccg  cross-correlogram synchrony normalised by the autocorrelograms,
//   d      inverse sheet distance,
// and the two terms are L_L = (1 - P(r, d)) / 2 and L_S = (1 - P(r_ccg, d)) / 2.
// A layer's contribution averages alpha L_L + beta L_S over M sampled clusters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/sheet.hpp"
#include "topo_snn/stats.hpp"
#include "topo_snn/tensor.hpp"

namespace topo {

// Binary activity of one layer, indexed (unit, trial, time).
struct SpikeTensor {
  int layer_id = 0;
  std::size_t units = 0, trials = 0, steps = 0;
  std::vector<double> data;

  SpikeTensor() = default;
  SpikeTensor(int layer, std::size_t n_units, std::size_t n_trials, std::size_t n_steps)
      : layer_id(layer), units(n_units), trials(n_trials), steps(n_steps),
        data(n_units * n_trials * n_steps, 0.0) {}

  double& at(std::size_t u, std::size_t b, std::size_t t) { return data[(u * trials + b) * steps + t]; }
  double at(std::size_t u, std::size_t b, std::size_t t) const {
    return data[(u * trials + b) * steps + t];
  }
  // Trial-major (B x T) block of one unit.
  std::span<const double> unit(std::size_t u) const {
    return std::span<const double>(data).subspan(u * trials * steps, trials * steps);
  }
};

// Per-timestep layer outputs (each shaped (B, ...units)) as recorded by the
// network, kept as graph tensors so the loss can backpropagate into them.
struct SpikeRecord {
  int layer_id = 0;
  std::vector<Tensor> steps;

  std::size_t trials() const { return steps.at(0).dim(0); }
  std::size_t units() const { return steps.at(0).size() / trials(); }

  SpikeTensor values() const {
    SpikeTensor s(layer_id, units(), trials(), steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto v = steps[t].data();
      for (std::size_t b = 0; b < s.trials; ++b)
        for (std::size_t u = 0; u < s.units; ++u) s.at(u, b, t) = v[b * s.units + u];
    }
    return s;
  }
};

struct STCConfig {
  double alpha = 50.0;
  double beta = 50.0;
  std::size_t window = 1;
  std::size_t clusters_per_layer = 4;
  std::vector<double> cluster_edge_mm{1.0};  // one per constrained layer, or a single shared value
  std::vector<int> layers;
  bool resample_every_step = true;

  double edge_for(std::size_t k) const {
    if (cluster_edge_mm.empty()) throw ConfigError("stc: cluster edge not set");
    return cluster_edge_mm.size() == 1 ? cluster_edge_mm[0] : cluster_edge_mm.at(k);
  }
};

// Per-trial mean rates, (unit, trial) row-major.
inline std::vector<double> firing_rate_vectors(const SpikeTensor& s) {
  std::vector<double> rates(s.units * s.trials, 0.0);
  const double inv_t = 1.0 / static_cast<double>(s.steps);
  for (std::size_t u = 0; u < s.units; ++u)
    for (std::size_t b = 0; b < s.trials; ++b) {
      double acc = 0.0;
      for (std::size_t t = 0; t < s.steps; ++t) acc += s.at(u, b, t);
      rates[u * s.trials + b] = acc * inv_t;
    }
  return rates;
}

// Number of valid (t, t + tau) index pairs in a window of T steps.
inline double lag_count(long tau, long steps) { return static_cast<double>(std::max(0L, steps - std::labs(tau))); }

namespace stc_detail {

inline void check_window(std::size_t window, std::size_t steps) {
  if (window + 1 > steps)
    throw ContractViolation("ccg: window " + std::to_string(window) + " requires at least " +
                            std::to_string(window + 1) + " timesteps, got " + std::to_string(steps));
}

// G(b, t) = sum_{|tau| <= W, 0 <= t + tau < T} S(b, t + tau) / (B lambda(tau, T)).
// With it, CCG(i, j) = sum_{b,t} S_i(b, t) G_j(b, t) and, because the lag window
// is symmetric, dCCG(i, j)/dS_i = G_j and dACG(i)/dS_i = 2 G_i.
inline void lag_smooth(std::span<const double> s, std::size_t trials, std::size_t steps,
                       std::size_t window, std::span<double> out) {
  const auto T = static_cast<long>(steps);
  const auto W = static_cast<long>(window);
  for (std::size_t b = 0; b < trials; ++b)
    for (long t = 0; t < T; ++t) {
      double acc = 0.0;
      for (long tau = -W; tau <= W; ++tau) {
        const long u = t + tau;
        if (u < 0 || u >= T) continue;
        acc += s[b * steps + static_cast<std::size_t>(u)] /
               (static_cast<double>(trials) * lag_count(tau, T));
      }
      out[b * steps + static_cast<std::size_t>(t)] = acc;
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace stc_detail

// Cross-correlogram of two (B x T) spike blocks over lags [-W, W]. The inner
// sum runs over t with both t and t + tau inside the window.
inline double ccg(std::span<const double> si, std::span<const double> sj, std::size_t trials,
                  std::size_t steps, std::size_t window) {
  TOPO_REQUIRE(si.size() == trials * steps && sj.size() == trials * steps,
               "ccg: spike blocks must be trials x steps");
  stc_detail::check_window(window, steps);
  std::vector<double> g(trials * steps);
  stc_detail::lag_smooth(sj, trials, steps, window, g);
  return stc_detail::dot(si, g);
}

// Synchrony r_ccg = CCG(i, j) / sqrt(ACG(i) ACG(j)), capped at 1. A silent unit
// (zero autocorrelogram) yields 0 with the degenerate flag.
inline stats::Correlation r_ccg(std::span<const double> si, std::span<const double> sj,
                                std::size_t trials, std::size_t steps, std::size_t window) {
  const double c = ccg(si, sj, trials, steps, window);
  const double ai = ccg(si, si, trials, steps, window);
  const double aj = ccg(sj, sj, trials, steps, window);
  if (ai <= 0.0 || aj <= 0.0) return {0.0, true};
  return {std::min(1.0, c / std::sqrt(ai * aj)), false};
}

// (1 - P(similarity, inverse distance)) / 2, the shared form of both terms.
inline double correlation_distance_loss(std::span<const double> similarity, std::span<const double> inv_dist,
                                        bool* degenerate = nullptr) {
  const auto p = stats::pearson(similarity, inv_dist);
  if (degenerate) *degenerate = p.degenerate;
  return 0.5 * (1.0 - p.value);
}

struct ClusterLoss {
  double long_term = 0.5;
  double short_term = 0.5;
  bool long_degenerate = false;
  bool short_degenerate = false;
  std::size_t pairs = 0;
};

// Both loss terms for one cluster given its gathered spikes (N x B x T,
// member-major) and the pairwise inverse distances in all_pairs() order.
// When grad_long / grad_short are non-empty they receive dL/dS with S treated
// as real-valued.
inline ClusterLoss cluster_loss(std::span<const double> spikes, std::size_t n, std::size_t trials,
                                std::size_t steps, std::span<const double> inv_dist,
                                std::size_t window, std::span<double> grad_long = {},
                                std::span<double> grad_short = {}) {
  const std::size_t bt = trials * steps;
  TOPO_REQUIRE(spikes.size() == n * bt, "cluster_loss: spike block size mismatch");
  TOPO_REQUIRE(n >= 2, "cluster_loss: cluster needs at least 2 units");
  TOPO_REQUIRE(trials >= 2, "cluster_loss: need at least 2 trials");
  const std::size_t npairs = n * (n - 1) / 2;
  TOPO_REQUIRE(inv_dist.size() == npairs, "cluster_loss: distance vector does not match pair count");
  stc_detail::check_window(window, steps);

  auto block = [&](std::size_t a) { return spikes.subspan(a * bt, bt); };
  ClusterLoss out;
  out.pairs = npairs;

  // Rate vectors and pairwise rate correlations.
  std::vector<double> rates(n * trials, 0.0);
  const double inv_t = 1.0 / static_cast<double>(steps);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < trials; ++b) {
      double acc = 0.0;
      for (std::size_t t = 0; t < steps; ++t) acc += spikes[a * bt + b * steps + t];
      rates[a * trials + b] = acc * inv_t;
    }
  auto rate = [&](std::size_t a) { return std::span<const double>(rates).subspan(a * trials, trials); };

  std::vector<double> r(npairs), rs(npairs);
  std::vector<char> rs_active(npairs, 0);
  std::vector<double> q_ratio(npairs, 0.0);

  std::vector<double> smooth(n * bt);
  std::vector<double> acg(n);
  for (std::size_t a = 0; a < n; ++a) {
    stc_detail::lag_smooth(block(a), trials, steps, window,
                           std::span<double>(smooth).subspan(a * bt, bt));
    acg[a] = stc_detail::dot(block(a), std::span<const double>(smooth).subspan(a * bt, bt));
  }
  auto sm = [&](std::size_t a) { return std::span<const double>(smooth).subspan(a * bt, bt); };

  std::size_t k = 0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b, ++k) {
      r[k] = stats::pearson(rate(a), rate(b)).value;
      if (acg[a] > 0.0 && acg[b] > 0.0) {
        const double q = stc_detail::dot(block(a), sm(b)) / std::sqrt(acg[a] * acg[b]);
        q_ratio[k] = q;
        rs[k] = std::min(1.0, q);
        rs_active[k] = q < 1.0;
      } else {
        rs[k] = 0.0;
      }
    }

  // A two-unit cluster has a single pair: no correlation over pairs exists.
  const stats::Correlation none{0.0, true};
  const auto p_long = npairs >= 2 ? stats::pearson(r, inv_dist) : none;
  const auto p_short = npairs >= 2 ? stats::pearson(rs, inv_dist) : none;
  out.long_term = 0.5 * (1.0 - p_long.value);
  out.short_term = 0.5 * (1.0 - p_short.value);
  out.long_degenerate = p_long.degenerate;
  out.short_degenerate = p_short.degenerate;

  std::vector<double> dp_dx(npairs), dp_dy(npairs);
  if (!grad_long.empty()) {
    TOPO_REQUIRE(grad_long.size() == spikes.size(), "cluster_loss: grad buffer size mismatch");
    std::fill(grad_long.begin(), grad_long.end(), 0.0);
    if (!p_long.degenerate) {
      stats::pearson_grad(r, inv_dist, dp_dx, dp_dy);
      std::vector<double> drate(n * trials, 0.0), gx(trials), gy(trials);
      k = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b, ++k) {
          const double up = -0.5 * dp_dx[k];
          if (up == 0.0) continue;
          stats::pearson_grad(rate(a), rate(b), gx, gy);
          for (std::size_t i = 0; i < trials; ++i) {
            drate[a * trials + i] += up * gx[i];
            drate[b * trials + i] += up * gy[i];
          }
        }
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < trials; ++b)
          for (std::size_t t = 0; t < steps; ++t)
            grad_long[a * bt + b * steps + t] = drate[a * trials + b] * inv_t;
    }
  }
  if (!grad_short.empty()) {
    TOPO_REQUIRE(grad_short.size() == spikes.size(), "cluster_loss: grad buffer size mismatch");
    std::fill(grad_short.begin(), grad_short.end(), 0.0);
    if (!p_short.degenerate) {
      stats::pearson_grad(rs, inv_dist, dp_dx, dp_dy);
      k = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b, ++k) {
          if (!rs_active[k]) continue;
          const double up = -0.5 * dp_dx[k];
          if (up == 0.0) continue;
          const double norm = std::sqrt(acg[a] * acg[b]);
          const double q = q_ratio[k];
          const auto ga = sm(a), gb = sm(b);
          for (std::size_t i = 0; i < bt; ++i) {
            grad_short[a * bt + i] += up * (gb[i] / norm - q * ga[i] / acg[a]);
            grad_short[b * bt + i] += up * (ga[i] / norm - q * gb[i] / acg[b]);
          }
        }
    }
  }
  return out;
}

inline std::vector<double> gather_cluster(const SpikeTensor& s, const std::vector<std::size_t>& members) {
  const std::size_t bt = s.trials * s.steps;
  std::vector<double> out(members.size() * bt);
  for (std::size_t a = 0; a < members.size(); ++a) {
    if (members[a] >= s.units) throw ContractViolation("cluster member outside layer");
    const auto src = s.unit(members[a]);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(a * bt));
  }
  return out;
}

// L_L for one cluster.
inline ClusterLoss long_timescale_loss(const SpikeTensor& s, const NeuronCluster& cluster,
                                       const CorticalSheet& sheet) {
  const auto d = pairwise_inverse_distance(sheet, all_pairs(cluster.members));
  const auto S = gather_cluster(s, cluster.members);
  return cluster_loss(S, cluster.members.size(), s.trials, s.steps, d, 0);
}

// L_S (and L_L) for one cluster with CCG window W.
inline ClusterLoss short_timescale_loss(const SpikeTensor& s, const NeuronCluster& cluster,
                                        const CorticalSheet& sheet, std::size_t window) {
  const auto d = pairwise_inverse_distance(sheet, all_pairs(cluster.members));
  const auto S = gather_cluster(s, cluster.members);
  return cluster_loss(S, cluster.members.size(), s.trials, s.steps, d, window);
}

struct LayerSTC {
  int layer_id = 0;
  double long_mean = 0.0;
  double short_mean = 0.0;
  double weighted_sum = 0.0;  // sum_m alpha L_L + beta L_S (before the 1/M factor)
  std::size_t degenerate = 0;
};

struct STCResult {
  Tensor loss;  // (1/M) sum_k sum_m [alpha L_L + beta L_S]
  std::vector<LayerSTC> layers;
  double long_mean() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.long_mean;
    return layers.empty() ? 0.0 : s / static_cast<double>(layers.size());
  }
  double short_mean() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.short_mean;
    return layers.empty() ? 0.0 : s / static_cast<double>(layers.size());
  }
};

inline const CorticalSheet& sheet_for_layer(const std::vector<CorticalSheet>& sheets, int layer_id) {
  for (const auto& s : sheets)
    if (s.layer_id() == layer_id) return s;
  throw ConfigError("no cortical sheet for constrained layer " + std::to_string(layer_id));
}

// Clusters for every constrained layer, drawn from a seed-derived stream.
inline std::vector<std::vector<NeuronCluster>> draw_clusters(const std::vector<CorticalSheet>& sheets,
                                                             const STCConfig& cfg, std::uint64_t seed) {
  std::vector<std::vector<NeuronCluster>> out;
  for (std::size_t k = 0; k < cfg.layers.size(); ++k) {
    const auto& sheet = sheet_for_layer(sheets, cfg.layers[k]);
    out.push_back(sample_clusters(sheet, cfg.clusters_per_layer, cfg.edge_for(k),
                                  derive_seed(seed, "stc-clusters", k)));
  }
  return out;
}

// Differentiable STC objective over recorded layer activity. Clusters are
// passed explicitly; see draw_clusters().
inline STCResult stc_total(const std::vector<SpikeRecord>& records,
                           const std::vector<CorticalSheet>& sheets, const STCConfig& cfg,
                           const std::vector<std::vector<NeuronCluster>>& clusters) {
  STCResult res;
  if (cfg.alpha == 0.0 && cfg.beta == 0.0) {
    res.loss = Tensor::scalar(0.0);
    for (int id : cfg.layers) res.layers.push_back({id, 0.0, 0.0, 0.0, 0});
    return res;
  }
  if (cfg.clusters_per_layer == 0) throw ConfigError("stc: clusters_per_layer must be >= 1");
  TOPO_REQUIRE(clusters.size() == cfg.layers.size(), "stc_total: one cluster list per constrained layer");

  struct Job {
    std::size_t record;
    std::vector<std::size_t> members;
    std::vector<double> inv_dist;
  };
  std::vector<Job> jobs;
  std::vector<Tensor> inputs;
  std::map<int, std::size_t> record_offset;  // record index -> first input slot
  double total = 0.0;

  for (std::size_t k = 0; k < cfg.layers.size(); ++k) {
    const int id = cfg.layers[k];
    const auto& sheet = sheet_for_layer(sheets, id);
    auto rec_it = std::find_if(records.begin(), records.end(), [&](auto& r) { return r.layer_id == id; });
    if (rec_it == records.end()) throw ConfigError("no spike record for constrained layer " + std::to_string(id));
    const auto ridx = static_cast<std::size_t>(rec_it - records.begin());
    if (rec_it->units() != sheet.size())
      throw ConfigError("sheet for layer " + std::to_string(id) + " has " + std::to_string(sheet.size()) +
                        " units, layer has " + std::to_string(rec_it->units()));
    if (!record_offset.count(static_cast<int>(ridx))) {
      record_offset[static_cast<int>(ridx)] = inputs.size();
      for (const auto& t : rec_it->steps) inputs.push_back(t);
    }
    const SpikeTensor s = rec_it->values();
    LayerSTC layer{id, 0.0, 0.0, 0.0, 0};
    for (const auto& cl : clusters[k]) {
      auto d = pairwise_inverse_distance(sheet, all_pairs(cl.members));
      const auto S = gather_cluster(s, cl.members);
      const auto terms = cluster_loss(S, cl.members.size(), s.trials, s.steps, d, cfg.window);
      layer.long_mean += terms.long_term;
      layer.short_mean += terms.short_term;
      layer.weighted_sum += cfg.alpha * terms.long_term + cfg.beta * terms.short_term;
      layer.degenerate += (terms.long_degenerate ? 1 : 0) + (terms.short_degenerate ? 1 : 0);
      jobs.push_back({ridx, cl.members, std::move(d)});
    }
    const double m = static_cast<double>(std::max<std::size_t>(1, clusters[k].size()));
    layer.long_mean /= m;
    layer.short_mean /= m;
    total += layer.weighted_sum;
    res.layers.push_back(layer);
  }
  total /= static_cast<double>(cfg.clusters_per_layer);

  const double alpha = cfg.alpha, beta = cfg.beta, inv_m = 1.0 / static_cast<double>(cfg.clusters_per_layer);
  const std::size_t window = cfg.window;
  std::vector<std::size_t> rec_steps(records.size()), rec_units(records.size()), rec_trials(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    rec_steps[i] = records[i].steps.size();
    rec_units[i] = records[i].units();
    rec_trials[i] = records[i].trials();
  }
  res.loss = Tensor::make_result(
      {1}, {total}, "stc_total", inputs,
      [jobs = std::move(jobs), record_offset, rec_steps, rec_units, rec_trials, alpha, beta, inv_m,
       window](topo::detail::Node& node) {
        const double up = node.grad[0] * inv_m;
        for (const auto& job : jobs) {
          const std::size_t T = rec_steps[job.record], U = rec_units[job.record], B = rec_trials[job.record];
          const std::size_t first = record_offset.at(static_cast<int>(job.record));
          const std::size_t n = job.members.size(), bt = B * T;
          std::vector<double> S(n * bt);
          for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < B; ++b)
              for (std::size_t t = 0; t < T; ++t)
                S[a * bt + b * T + t] = node.parents[first + t]->value[b * U + job.members[a]];
          std::vector<double> gl(S.size()), gs(S.size());
          cluster_loss(S, n, B, T, job.inv_dist, window, gl, gs);
          for (std::size_t t = 0; t < T; ++t) {
            auto& p = node.parents[first + t];
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t a = 0; a < n; ++a)
              for (std::size_t b = 0; b < B; ++b) {
                const std::size_t i = a * bt + b * T + t;
                g[b * U + job.members[a]] += up * (alpha * gl[i] + beta * gs[i]);
              }
          }
        }
      });
  return res;
}

}  // namespace topo
