#pragma once

// Spike-train entropy and per-timestep Fisher information.

#include <concepts>
#include <map>
#include <string>
#include <vector>

#include "topo_snn/network.hpp"
#include "topo_snn/ops.hpp"
#include "topo_snn/stats.hpp"
#include "topo_snn/stc.hpp"

namespace topo {

enum class EntropyAxis { Layer, Timestep };

// Mean binary entropy (bits) over units. Layer: one value, firing probability
// pooled over trials and timesteps. Timestep: one value per step, probability
// over trials at that step.
inline std::vector<double> spike_entropy(const SpikeTensor& s, EntropyAxis axis) {
  TOPO_REQUIRE(s.units > 0 && s.trials > 0 && s.steps > 0, "spike_entropy: empty spike tensor");
  if (axis == EntropyAxis::Layer) {
    double h = 0.0;
    for (std::size_t u = 0; u < s.units; ++u) h += stats::binary_entropy_bits(stats::mean(s.unit(u)));
    return {h / static_cast<double>(s.units)};
  }
  std::vector<double> out(s.steps, 0.0);
  for (std::size_t t = 0; t < s.steps; ++t) {
    for (std::size_t u = 0; u < s.units; ++u) {
      double p = 0.0;
      for (std::size_t b = 0; b < s.trials; ++b) p += s.at(u, b, t);
      out[t] += stats::binary_entropy_bits(p / static_cast<double>(s.trials));
    }
    out[t] /= static_cast<double>(s.units);
  }
  return out;
}

// Anything with named parameters, a horizon, and a differentiable
// log p(y | x restricted to the first t steps).
template <class M>
concept FisherModel = requires(M& m, const Tensor& x, int y, std::size_t t) {
  { m.params() } -> std::same_as<std::vector<NamedParam>&>;
  { m.timesteps() } -> std::convertible_to<std::size_t>;
  { m.log_prob(x, y, t) } -> std::same_as<Tensor>;
};

struct FisherResult {
  std::size_t t = 0;
  std::size_t samples = 0;
  std::vector<std::string> groups;  // first-seen parameter order
  std::vector<double> per_group;
  double total = 0.0;
};

// I_t = (1/N) sum_n ||grad_theta log p(y_n | x_n, steps <= t)||^2, split by
// parameter group (the group values sum to the total).
template <FisherModel M>
FisherResult fisher_information(M& model, const std::vector<Tensor>& xs, const std::vector<int>& ys, std::size_t t) {
  if (t < 1 || t > model.timesteps())
    throw ConfigError("fisher_information: t = " + std::to_string(t) + " outside [1, " +
                      std::to_string(model.timesteps()) + "]");
  if (xs.empty() || xs.size() != ys.size()) throw ConfigError("fisher_information: need N >= 1 labelled samples");
  FisherResult r;
  r.t = t;
  r.samples = xs.size();
  auto& params = model.params();
  std::vector<std::size_t> group_of(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = std::find(r.groups.begin(), r.groups.end(), params[i].group);
    if (it == r.groups.end()) {
      r.groups.push_back(params[i].group);
      r.per_group.push_back(0.0);
      group_of[i] = r.groups.size() - 1;
    } else {
      group_of[i] = static_cast<std::size_t>(it - r.groups.begin());
    }
  }
  for (std::size_t n = 0; n < xs.size(); ++n) {
    for (auto& p : params) p.value.zero_grad();
    Tensor lp = model.log_prob(xs[n], ys[n], t);
    lp.backward();
    for (std::size_t i = 0; i < params.size(); ++i) {
      double sq = 0.0;
      for (double g : params[i].value.grad()) sq += g * g;
      r.per_group[group_of[i]] += sq;
    }
  }
  for (auto& v : r.per_group) {
    v /= static_cast<double>(xs.size());
    r.total += v;
  }
  for (auto& p : params) p.value.zero_grad();
  return r;
}

// FisherModel view of a spiking network: x is a single (1, C, H, W) image and
// the readout averages only the first t steps.
class NetworkFisherAdapter {
 public:
  explicit NetworkFisherAdapter(Network& net, ops::SpikeFn fn = {}) : net_(net), fn_(fn) {}
  std::vector<NamedParam>& params() { return net_.params(); }
  std::size_t timesteps() const { return net_.spec().timesteps; }
  Tensor log_prob(const Tensor& x, int y, std::size_t t) {
    ForwardOptions opt;
    opt.spike = fn_;
    opt.steps = t;
    auto res = net_.forward(x, opt);
    const int label[] = {y};
    return ops::sum(ops::log_softmax_pick(res.logits, label));
  }

 private:
  Network& net_;
  ops::SpikeFn fn_;
};

inline FisherResult fisher_information(Network& net, const Tensor& images, const std::vector<int>& labels,
                                       std::size_t t) {
  TOPO_REQUIRE(images.rank() == 4 && images.dim(0) == labels.size(), "fisher_information: images/labels mismatch");
  std::vector<Tensor> xs;
  const std::size_t per = images.size() / images.dim(0);
  for (std::size_t n = 0; n < images.dim(0); ++n) {
    std::vector<double> v(images.data().begin() + static_cast<std::ptrdiff_t>(n * per),
                          images.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * per));
    xs.emplace_back(Shape{1, images.dim(1), images.dim(2), images.dim(3)}, std::move(v));
  }
  NetworkFisherAdapter m(net);
  return fisher_information(m, xs, labels, t);
}

}  // namespace topo
