#pragma once

// SGD with (heavy-ball) momentum and a cosine learning-rate schedule.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/network.hpp"

namespace topo {

// lr_t = lr * (1 + cos(pi * t / total)) / 2; constant when total = 0.
inline double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double f = static_cast<double>(std::min(step, total)) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

class SGD {
 public:
  SGD() = default;
  SGD(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  }

  // v <- mu v + (g + wd w);  w <- w - lr v
  void step(std::vector<NamedParam>& params, double lr) {
    if (velocity_.empty())
      for (const auto& p : params) velocity_.emplace_back(p.value.size(), 0.0);
    TOPO_REQUIRE(velocity_.size() == params.size(), "SGD: parameter list changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto g = params[i].value.grad();
      auto w = params[i].value.mutable_data();
      auto& v = velocity_[i];
      TOPO_REQUIRE(v.size() == w.size(), "SGD: parameter " + params[i].name + " changed size");
      for (std::size_t j = 0; j < w.size(); ++j) {
        v[j] = momentum_ * v[j] + g[j] + weight_decay_ * w[j];
        w[j] -= lr * v[j];
      }
    }
  }

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }
  void set_velocity(std::vector<std::vector<double>> v) { velocity_ = std::move(v); }

 private:
  double momentum_ = 0.9;
  double weight_decay_ = 0.0;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace topo
