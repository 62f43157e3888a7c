#pragma once

// Robustness probes: Gaussian noise, FGSM, PGD and per-timestep pixel masking.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "topo_snn/network.hpp"
#include "topo_snn/ops.hpp"
#include "topo_snn/rng.hpp"

namespace topo {

enum class AttackKind { Gaussian, Fgsm, Pgd, Mask };

inline AttackKind attack_kind_from(const std::string& s) {
  if (s == "gaussian") return AttackKind::Gaussian;
  if (s == "fgsm") return AttackKind::Fgsm;
  if (s == "pgd") return AttackKind::Pgd;
  if (s == "mask") return AttackKind::Mask;
  throw ConfigError("unknown attack '" + s + "' (gaussian, fgsm, pgd, mask)");
}

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Gaussian: return "gaussian";
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Mask: return "mask";
  }
  return "?";
}

inline std::vector<int> predict(const Network& net, const Tensor& images, const ForwardOptions& opt = {}) {
  NoGradGuard guard;
  const auto logits = net.forward(images, opt).logits;
  const std::size_t k = logits.dim(1);
  std::vector<int> out;
  for (std::size_t b = 0; b < logits.dim(0); ++b) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits[b * k + j] > logits[b * k + best]) best = j;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  TOPO_REQUIRE(pred.size() == labels.size() && !labels.empty(), "accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

// d(mean cross-entropy)/d(images) through the surrogate-gradient network.
inline std::vector<double> input_gradient(const Network& net, const Tensor& images, const std::vector<int>& labels) {
  Tensor x(images.shape(), std::vector<double>(images.data().begin(), images.data().end()), true);
  auto loss = ops::softmax_cross_entropy(net.forward(x).logits, labels);
  loss.backward();
  return x.grad();
}

inline double sign_of(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// clip(x + eps * sign(grad), 0, 1) for any source of input gradients.
inline Tensor fgsm_step(const Tensor& images, std::span<const double> grad, double eps) {
  TOPO_REQUIRE(grad.size() == images.size(), "fgsm_step: gradient size mismatch");
  std::vector<double> v(images.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(images[i] + eps * sign_of(grad[i]), 0.0, 1.0);
  return Tensor(images.shape(), std::move(v));
}

inline Tensor fgsm(const Network& net, const Tensor& images, const std::vector<int>& labels, double eps) {
  return fgsm_step(images, input_gradient(net, images, labels), eps);
}

// k signed-gradient steps of size eps / k, each projected onto the L-inf
// eps-ball around the clean images and onto [0, 1].
inline Tensor pgd(const Network& net, const Tensor& images, const std::vector<int>& labels, double eps,
                  std::size_t steps) {
  if (steps < 1) throw ConfigError("pgd needs at least one step");
  const double alpha = eps / static_cast<double>(steps);
  Tensor x = images.detach();
  for (std::size_t k = 0; k < steps; ++k) {
    const auto g = input_gradient(net, x, labels);
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double stepped = x[i] + alpha * sign_of(g[i]);
      v[i] = std::clamp(std::clamp(stepped, images[i] - eps, images[i] + eps), 0.0, 1.0);
    }
    x = Tensor(images.shape(), std::move(v));
  }
  return x;
}

inline Tensor gaussian_noise(const Tensor& images, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(images.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = n(rng);
    v[i] = sigma > 0.0 ? std::clamp(images[i] + sigma * z, 0.0, 1.0) : images[i];
  }
  return Tensor(images.shape(), std::move(v));
}

// Zeroes a fraction of pixel locations (all channels) independently at each timestep.
inline Tensor mask_pixels(const Tensor& images, double fraction, std::uint64_t seed, std::size_t t) {
  Rng rng(derive_seed(seed, "mask", t));
  const std::size_t nb = images.dim(0), c = images.dim(1), plane = images.dim(2) * images.dim(3);
  std::vector<double> v(images.data().begin(), images.data().end());
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      const bool drop = fraction >= 1.0 || (fraction > 0.0 && uniform01(rng) < fraction);
      if (drop)
        for (std::size_t ch = 0; ch < c; ++ch) v[(b * c + ch) * plane + p] = 0.0;
    }
  return Tensor(images.shape(), std::move(v));
}

struct AttackResult {
  AttackKind kind = AttackKind::Gaussian;
  double strength = 0.0;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  Tensor perturbed;  // empty for mask (the perturbation differs per timestep)

  double delta() const { return attacked_accuracy - clean_accuracy; }
};

inline AttackResult attack(const Network& net, const Tensor& images, const std::vector<int>& labels, AttackKind kind,
                           double strength, std::uint64_t seed = 0, std::size_t pgd_steps = 10) {
  if (!(strength >= 0.0)) throw ConfigError("attack strength must be >= 0");
  if (kind == AttackKind::Mask && strength > 1.0) throw ConfigError("mask fraction must be <= 1");
  AttackResult r;
  r.kind = kind;
  r.strength = strength;
  r.clean_accuracy = accuracy(predict(net, images), labels);
  ForwardOptions opt;
  switch (kind) {
    case AttackKind::Gaussian: r.perturbed = gaussian_noise(images, strength, derive_seed(seed, "gaussian")); break;
    case AttackKind::Fgsm: r.perturbed = fgsm(net, images, labels, strength); break;
    case AttackKind::Pgd: r.perturbed = pgd(net, images, labels, strength, pgd_steps); break;
    case AttackKind::Mask:
      opt.input_at = [&](std::size_t t, const Tensor& x) { return mask_pixels(x, strength, seed, t); };
      break;
  }
  r.attacked_accuracy = kind == AttackKind::Mask ? accuracy(predict(net, images, opt), labels)
                                                 : accuracy(predict(net, r.perturbed), labels);
  return r;
}

}  // namespace topo
