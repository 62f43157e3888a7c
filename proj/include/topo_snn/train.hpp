#pragma once

// BPTT training loop for the combined objective
//   total = L_task + (1/M) sum_k sum_m [alpha L_L(k, m) + beta L_S(k, m)].
// Batch order and cluster draws are pure functions of (seed, epoch) and
// (seed, step), so a run resumed from a checkpoint replays the remaining
// steps exactly.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "topo_snn/analysis/attacks.hpp"
#include "topo_snn/dataset.hpp"
#include "topo_snn/network.hpp"
#include "topo_snn/optim.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/sheet.hpp"
#include "topo_snn/stc.hpp"

namespace topo {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::string optimizer = "sgd";
  std::string schedule = "cosine";  // cosine | constant
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // steps; 0 = only at the end
  bool normalize_inputs = true;      // copy the dataset's train mean/std into the network
  STCConfig stc;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (trial correlations need two points)");
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (optimizer != "sgd") throw ConfigError("train.optimizer: only 'sgd' is supported, got '" + optimizer + "'");
    if (schedule != "cosine" && schedule != "constant")
      throw ConfigError("train.schedule must be 'cosine' or 'constant', got '" + schedule + "'");
    if (!(stc.alpha >= 0.0) || !(stc.beta >= 0.0)) throw ConfigError("stc.alpha and stc.beta must be >= 0");
    if (stc.window < 1) throw ConfigError("stc.window must be >= 1");
    for (double e : stc.cluster_edge_mm)
      if (!(e > 0.0)) throw ConfigError("stc.cluster_edge_mm must be positive");
  }
};

struct LayerLossRow {
  int layer_id = 0;
  double long_term = 0.0;
  double short_term = 0.0;
};

struct TrainLogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double task = 0.0;
  double long_mean = 0.0;
  double short_mean = 0.0;
  double stc = 0.0;
  double total = 0.0;
  double batch_accuracy = 0.0;
  std::vector<LayerLossRow> layers;
};

struct TrainState {
  std::size_t step = 0;  // optimizer steps completed
  std::vector<std::vector<double>> velocity;
};

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_step;
  // Called every checkpoint_every steps with the state after that step.
  std::function<void(const Network&, const TrainState&)> on_checkpoint;
  std::size_t stop_after = 0;  // stop once this many steps are done; 0 = run to the end
};

struct TrainedModel {
  Network net;
  std::vector<CorticalSheet> sheets;
  TrainConfig cfg;
  TrainState state;
  std::vector<TrainLogRow> log;
  bool finished = false;
};

inline std::size_t steps_per_epoch(const DatasetHandle& d, const TrainConfig& cfg) {
  return d.train.size() / cfg.batch_size;
}

inline std::size_t total_steps(const DatasetHandle& d, const TrainConfig& cfg) {
  return steps_per_epoch(d, cfg) * cfg.epochs;
}

inline std::vector<std::size_t> epoch_order(const DatasetHandle& d, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order = d.train;
  Rng rng(derive_seed(seed, "batch-order", epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// The STC layers of a run: the configured list, or every constrained layer.
inline std::vector<int> stc_layers(const NetworkSpec& spec, const STCConfig& stc) {
  return stc.layers.empty() ? spec.constrained : stc.layers;
}

// Every check that can fail without running the network.
inline void check_training_setup(const NetworkSpec& spec, const DatasetHandle& data, const TrainConfig& cfg,
                                 const std::vector<CorticalSheet>& sheets) {
  cfg.validate();
  spec.validate();
  if (data.size() == 0 || data.train.empty()) throw ConfigError("training data is empty");
  if (data.channels != spec.in_channels || data.height != spec.in_h || data.width != spec.in_w)
    throw ConfigError("dataset images are " + std::to_string(data.channels) + "x" + std::to_string(data.height) +
                      "x" + std::to_string(data.width) + ", network expects " + std::to_string(spec.in_channels) +
                      "x" + std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w));
  if (data.num_classes > spec.num_classes)
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes, network head has " +
                      std::to_string(spec.num_classes));
  if (data.train.size() < cfg.batch_size)
    throw ConfigError("training split (" + std::to_string(data.train.size()) + ") is smaller than one batch (" +
                      std::to_string(cfg.batch_size) + ")");
  const bool active = cfg.stc.alpha > 0.0 || cfg.stc.beta > 0.0;
  if (!active) return;
  const auto layers = stc_layers(spec, cfg.stc);
  if (layers.empty()) throw ConfigError("stc is enabled but no layer is constrained");
  if (cfg.stc.clusters_per_layer < 1) throw ConfigError("stc.clusters_per_layer must be >= 1");
  if (cfg.stc.cluster_edge_mm.size() != 1 && cfg.stc.cluster_edge_mm.size() != layers.size())
    throw ConfigError("stc.cluster_edge_mm needs one value or one per constrained layer");
  for (int id : layers) {
    if (std::find(spec.constrained.begin(), spec.constrained.end(), id) == spec.constrained.end())
      throw ConfigError("stc layer " + std::to_string(id) + " is not a constrained layer of the network");
    const auto& sheet = sheet_for_layer(sheets, id);
    const auto shape = spec.layer_shape(static_cast<std::size_t>(id));
    if (sheet.size() != shape.size() || sheet.channels() != shape.c || sheet.map_height() != shape.h ||
        sheet.map_width() != shape.w)
      throw ConfigError("sheet for layer " + std::to_string(id) + " is " + std::to_string(sheet.channels()) + "x" +
                        std::to_string(sheet.map_height()) + "x" + std::to_string(sheet.map_width()) +
                        ", layer is " + std::to_string(shape.c) + "x" + std::to_string(shape.h) + "x" +
                        std::to_string(shape.w));
  }
}

// Accuracy over the given examples, evaluated in batches without a tape.
inline double evaluate(const Network& net, const DatasetHandle& data, const std::vector<std::size_t>& idx,
                       std::size_t batch = 64) {
  if (idx.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t s = 0; s < idx.size(); s += batch) {
    std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(s),
                                  idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + batch)));
    auto [x, y] = data.batch(part);
    const auto p = predict(net, x);
    for (std::size_t i = 0; i < y.size(); ++i) hit += p[i] == y[i];
  }
  return static_cast<double>(hit) / static_cast<double>(idx.size());
}

// One optimizer step on one batch; returns the log row.
inline TrainLogRow train_step(Network& net, SGD& opt, const DatasetHandle& data, const TrainConfig& cfg,
                              const std::vector<CorticalSheet>& sheets, std::size_t step, std::size_t total) {
  const std::size_t spe = steps_per_epoch(data, cfg);
  const std::size_t epoch = step / spe, b = step % spe;
  const auto order = epoch_order(data, cfg.seed, epoch);
  std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                               order.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg.batch_size));
  auto [x, y] = data.batch(idx);

  net.zero_grad();
  STCConfig stc = cfg.stc;
  stc.layers = stc_layers(net.spec(), cfg.stc);
  const bool active = stc.alpha > 0.0 || stc.beta > 0.0;
  ForwardOptions fo;
  auto res = net.forward(x, fo);
  Tensor task = ops::softmax_cross_entropy(res.logits, y);
  TrainLogRow row;
  row.step = step;
  row.epoch = epoch;
  row.lr = cfg.schedule == "cosine" ? cosine_lr(cfg.lr, step, total) : cfg.lr;
  row.task = task.item();
  Tensor loss = task;
  if (active) {
    const auto clusters = draw_clusters(sheets, stc, derive_seed(cfg.seed, "stc-clusters", step));
    auto r = stc_total(res.records, sheets, stc, clusters);
    loss = ops::add(task, r.loss);
    row.stc = r.loss.item();
    row.long_mean = r.long_mean();
    row.short_mean = r.short_mean();
    for (const auto& l : r.layers) row.layers.push_back({l.layer_id, l.long_mean, l.short_mean});
  }
  row.total = loss.item();
  const std::size_t k = res.logits.dim(1);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (res.logits[i * k + j] > res.logits[i * k + best]) best = j;
    hit += static_cast<int>(best) == y[i];
  }
  row.batch_accuracy = static_cast<double>(hit) / static_cast<double>(y.size());
  loss.backward();
  opt.step(net.params(), row.lr);
  return row;
}

// Trains `net` in place. Pass a TrainState to continue an interrupted run;
// the network must then hold the weights saved with that state.
inline TrainedModel train(Network net, const DatasetHandle& data, const TrainConfig& cfg,
                          std::vector<CorticalSheet> sheets, const TrainHooks& hooks = {},
                          std::optional<TrainState> resume = std::nullopt) {
  check_training_setup(net.spec(), data, cfg, sheets);
  if (cfg.normalize_inputs && !resume) {
    net.mutable_spec().input_mean = data.mean;
    net.mutable_spec().input_std = data.stddev;
  }
  SGD opt(cfg.momentum, cfg.weight_decay);
  TrainState state;
  if (resume) {
    state = *resume;
    if (!state.velocity.empty()) opt.set_velocity(state.velocity);
  }
  const std::size_t total = total_steps(data, cfg);
  TrainedModel out;
  while (state.step < total) {
    if (hooks.stop_after && state.step >= hooks.stop_after) break;
    auto row = train_step(net, opt, data, cfg, sheets, state.step, total);
    ++state.step;
    if (hooks.on_step) hooks.on_step(row);
    out.log.push_back(std::move(row));
    if (cfg.checkpoint_every && state.step % cfg.checkpoint_every == 0 && state.step < total && hooks.on_checkpoint) {
      state.velocity = opt.velocity();
      hooks.on_checkpoint(net, state);
    }
  }
  state.velocity = opt.velocity();
  out.finished = state.step >= total;
  out.net = std::move(net);
  out.sheets = std::move(sheets);
  out.cfg = cfg;
  out.state = std::move(state);
  return out;
}

}  // namespace topo
