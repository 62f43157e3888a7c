#pragma once

// Feedforward spiking network: a stack of (conv | dense) -> LIF [-> avg-pool]
// blocks followed by a non-spiking dense readout averaged over timesteps.
// Every block's LIF output is a "layer" addressable by its block index; the
// constrained ones carry a cortical sheet.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/lif.hpp"
#include "topo_snn/ops.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/stc.hpp"
#include "topo_snn/tensor.hpp"

namespace topo {

enum class LayerKind { Conv, Dense };

struct BlockSpec {
  LayerKind kind = LayerKind::Conv;
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  // Dense blocks lay their outputs out as (channels, out_h, out_w).
  std::size_t out_h = 1;
  std::size_t out_w = 1;
  std::size_t pool = 1;  // 1 = no pooling
  std::string group;     // parameter group for Fisher reports (V1, V2, ...)
};

struct LayerShape {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t size() const { return c * h * w; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct NetworkSpec {
  std::size_t in_channels = 1;
  std::size_t in_h = 32;
  std::size_t in_w = 32;
  std::size_t timesteps = 4;
  std::size_t num_classes = 4;
  LIFParams lif;
  std::vector<BlockSpec> blocks;
  std::vector<int> constrained;  // block indices carrying a cortical sheet
  std::string head_group = "IT";
  std::vector<double> input_mean;  // per channel; empty = identity
  std::vector<double> input_std;

  // Shape of block i's spiking output (before pooling).
  LayerShape layer_shape(std::size_t i) const {
    LayerShape cur{in_channels, in_h, in_w};
    for (std::size_t b = 0; b <= i; ++b) {
      const auto& blk = blocks.at(b);
      LayerShape out;
      if (blk.kind == LayerKind::Conv) {
        if (cur.h + 2 * blk.pad < blk.kernel || cur.w + 2 * blk.pad < blk.kernel || blk.stride == 0)
          throw ConfigError("block " + std::to_string(b) + ": kernel does not fit input");
        out = {blk.channels, (cur.h + 2 * blk.pad - blk.kernel) / blk.stride + 1,
               (cur.w + 2 * blk.pad - blk.kernel) / blk.stride + 1};
      } else {
        out = {blk.channels, blk.out_h, blk.out_w};
      }
      if (b == i) return out;
      if (blk.pool > 1) {
        if (out.h % blk.pool || out.w % blk.pool)
          throw ConfigError("block " + std::to_string(b) + ": pool " + std::to_string(blk.pool) +
                            " does not tile " + std::to_string(out.h) + "x" + std::to_string(out.w));
        out.h /= blk.pool;
        out.w /= blk.pool;
      }
      cur = out;
    }
    return cur;
  }

  LayerShape block_output(std::size_t i) const {
    LayerShape s = layer_shape(i);
    const auto p = blocks.at(i).pool;
    if (p > 1) {
      s.h /= p;
      s.w /= p;
    }
    return s;
  }

  LayerShape block_input(std::size_t i) const {
    return i == 0 ? LayerShape{in_channels, in_h, in_w} : block_output(i - 1);
  }

  std::string group_of(std::size_t i) const {
    const auto& g = blocks.at(i).group;
    return g.empty() ? "block" + std::to_string(i) : g;
  }

  void validate() const {
    lif.validate();
    if (timesteps < 1) throw ConfigError("timesteps must be >= 1");
    if (blocks.empty()) throw ConfigError("network needs at least one block");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (in_channels == 0 || in_h == 0 || in_w == 0) throw ConfigError("input shape must be positive");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].channels == 0) throw ConfigError("block " + std::to_string(i) + " has no channels");
      block_output(i);
    }
    for (int id : constrained)
      if (id < 0 || static_cast<std::size_t>(id) >= blocks.size())
        throw ConfigError("constrained layer " + std::to_string(id) + " does not exist");
    if (!input_mean.empty() && (input_mean.size() != in_channels || input_std.size() != in_channels))
      throw ConfigError("input normalization needs one mean/std per channel");
    for (double s : input_std)
      if (!(s > 0.0)) throw ConfigError("input std must be positive");
  }
};

struct NamedParam {
  std::string name;
  std::string group;
  Tensor value;
};

struct ForwardOptions {
  ops::SpikeFn spike{};
  std::size_t steps = 0;    // 0 = spec.timesteps; fewer truncates the readout average
  bool record_all = false;  // otherwise only constrained layers are recorded
  // Optional per-timestep input transform (e.g. independent masking per step).
  std::function<Tensor(std::size_t t, const Tensor& images)> input_at;
};

struct ForwardResult {
  Tensor logits;                    // (B, classes)
  std::vector<SpikeRecord> records; // per recorded layer, T tensors of (B, C, H, W)
};

class Network {
 public:
  Network() = default;

  // Weights ~ N(0, gain^2 * 2 / fan_in) for spiking blocks, N(0, 1 / fan_in)
  // for the readout; all biases zero.
  Network(NetworkSpec spec, std::uint64_t seed, double gain = 1.0) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(seed);
    for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
      const auto& blk = spec_.blocks[i];
      const auto in = spec_.block_input(i);
      const auto out = spec_.layer_shape(i);
      Shape wshape;
      std::size_t fan_in;
      std::size_t nbias;
      if (blk.kind == LayerKind::Conv) {
        wshape = {blk.channels, in.c, blk.kernel, blk.kernel};
        fan_in = in.c * blk.kernel * blk.kernel;
        nbias = blk.channels;
      } else {
        wshape = {out.size(), in.size()};
        fan_in = in.size();
        nbias = out.size();
      }
      params_.push_back({"block" + std::to_string(i) + ".weight", spec_.group_of(i),
                         random_normal(wshape, gain * std::sqrt(2.0 / static_cast<double>(fan_in)), rng)});
      params_.push_back({"block" + std::to_string(i) + ".bias", spec_.group_of(i),
                         Tensor::zeros({nbias}, true)});
    }
    const auto last = spec_.block_output(spec_.blocks.size() - 1);
    params_.push_back({"head.weight", spec_.head_group,
                       random_normal({spec_.num_classes, last.size()},
                                     std::sqrt(1.0 / static_cast<double>(last.size())), rng)});
    params_.push_back({"head.bias", spec_.head_group, Tensor::zeros({spec_.num_classes}, true)});
  }

  Network(NetworkSpec spec, std::vector<NamedParam> params)
      : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    if (params_.size() != 2 * spec_.blocks.size() + 2)
      throw CorruptArtifact("network expects " + std::to_string(2 * spec_.blocks.size() + 2) +
                            " parameter tensors, got " + std::to_string(params_.size()));
    Network reference(spec_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].value.shape() != reference.params_[i].value.shape())
        throw CorruptArtifact("parameter " + reference.params_[i].name + " has shape " +
                              shape_str(params_[i].value.shape()) + ", expected " +
                              shape_str(reference.params_[i].value.shape()));
      params_[i].name = reference.params_[i].name;
      params_[i].group = reference.params_[i].group;
      params_[i].value.set_requires_grad(true);
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  NetworkSpec& mutable_spec() { return spec_; }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }

  const Tensor& weight(std::size_t block) const { return params_.at(2 * block).value; }
  const Tensor& bias(std::size_t block) const { return params_.at(2 * block + 1).value; }
  const Tensor& head_weight() const { return params_.at(params_.size() - 2).value; }
  const Tensor& head_bias() const { return params_.back().value; }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  // Runs the network for T steps presenting the same (normalised) image batch
  // at every step. Logits are the time average of the readout.
  ForwardResult forward(const Tensor& images, const ForwardOptions& opt = {}) const {
    const auto& s = spec_;
    if (images.rank() != 4 || images.dim(1) != s.in_channels || images.dim(2) != s.in_h ||
        images.dim(3) != s.in_w)
      throw ContractViolation("forward: images " + shape_str(images.shape()) + " do not match input (B, " +
                              std::to_string(s.in_channels) + ", " + std::to_string(s.in_h) + ", " +
                              std::to_string(s.in_w) + ")");
    const std::size_t batch = images.dim(0);
    const std::size_t steps = opt.steps ? opt.steps : s.timesteps;
    if (steps > s.timesteps) throw ContractViolation("forward: steps exceed network timesteps");

    std::vector<LayerState> state;
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      const auto ls = s.layer_shape(i);
      state.push_back(LayerState::zeros({batch, ls.c, ls.h, ls.w}));
    }
    ForwardResult res;
    std::vector<int> recorded;
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
      const bool constrained =
          std::find(s.constrained.begin(), s.constrained.end(), static_cast<int>(i)) != s.constrained.end();
      if (opt.record_all || constrained) {
        recorded.push_back(static_cast<int>(i));
        res.records.push_back({static_cast<int>(i), {}});
      }
    }

    auto normalise = [&](const Tensor& x) {
      if (s.input_mean.empty()) return x;
      std::vector<double> inv(s.input_std.size());
      for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / s.input_std[c];
      return ops::channel_affine(x, s.input_mean, inv);
    };
    Tensor static_input = opt.input_at ? Tensor{} : normalise(images);

    Tensor logit_sum;
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor x = opt.input_at ? normalise(opt.input_at(t, images)) : static_input;
      std::size_t rec = 0;
      for (std::size_t i = 0; i < s.blocks.size(); ++i) {
        const auto& blk = s.blocks[i];
        const auto ls = s.layer_shape(i);
        Tensor current;
        if (blk.kind == LayerKind::Conv) {
          current = ops::conv2d(x, weight(i), bias(i), blk.stride, blk.pad);
        } else {
          Tensor flat = ops::reshape(x, {batch, x.size() / batch});
          current = ops::reshape(ops::linear(flat, weight(i), bias(i)), {batch, ls.c, ls.h, ls.w});
        }
        auto [next, spikes] = lif_step(state[i], current, s.lif, opt.spike);
        state[i] = std::move(next);
        if (rec < recorded.size() && recorded[rec] == static_cast<int>(i)) res.records[rec++].steps.push_back(spikes);
        x = blk.pool > 1 ? ops::avg_pool2d(spikes, blk.pool) : spikes;
      }
      Tensor out = ops::linear(ops::reshape(x, {batch, x.size() / batch}), head_weight(), head_bias());
      logit_sum = logit_sum.defined() ? ops::add(logit_sum, out) : out;
    }
    res.logits = ops::scale(logit_sum, 1.0 / static_cast<double>(steps));
    return res;
  }

 private:
  static Tensor random_normal(Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
  }

  NetworkSpec spec_;
  std::vector<NamedParam> params_;
};

inline ForwardResult forward_pass(const Network& net, const Tensor& images, const ForwardOptions& opt = {}) {
  return net.forward(images, opt);
}

// The desk-scale default: three 3x3 conv blocks (8/16/32 channels) with 2x2
// pooling on 32x32 inputs, sheets on every block, readout to `classes`.
inline NetworkSpec default_network_spec(std::size_t in_channels = 3, std::size_t size = 32,
                                        std::size_t classes = 4) {
  NetworkSpec s;
  s.in_channels = in_channels;
  s.in_h = s.in_w = size;
  s.num_classes = classes;
  const char* groups[] = {"V1", "V2", "V4"};
  std::size_t ch = 8;
  for (int i = 0; i < 3; ++i, ch *= 2) {
    BlockSpec b;
    b.kind = LayerKind::Conv;
    b.channels = ch;
    b.pool = 2;
    b.group = groups[i];
    s.blocks.push_back(b);
  }
  s.constrained = {0, 1, 2};
  return s;
}

}  // namespace topo
