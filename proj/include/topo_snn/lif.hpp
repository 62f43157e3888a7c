#pragma once

#include <string>
#include <utility>

#include "topo_snn/error.hpp"
#include "topo_snn/ops.hpp"
#include "topo_snn/tensor.hpp"

namespace topo {

enum class ResetMode { Hard, Soft };

inline std::string to_string(ResetMode m) { return m == ResetMode::Hard ? "hard" : "soft"; }
inline ResetMode reset_mode_from(const std::string& s) {
  if (s == "hard") return ResetMode::Hard;
  if (s == "soft") return ResetMode::Soft;
  throw ConfigError("reset mode must be 'hard' or 'soft', got '" + s + "'");
}

struct LIFParams {
  double tau_m = 2.0;
  double v_th = 1.0;
  double v_reset = 0.0;
  ResetMode reset = ResetMode::Hard;

  void validate() const {
    if (!(tau_m >= 1.0)) throw ConfigError("LIF tau_m must be >= 1");
    if (!(v_th > v_reset)) throw ConfigError("LIF v_th must exceed v_reset");
    if (!(v_th > 0.0)) throw ConfigError("LIF v_th must be positive");
  }
};

struct LayerState {
  Tensor membrane;
  Tensor last_spikes;

  static LayerState zeros(const Shape& shape) { return {Tensor::zeros(shape), Tensor::zeros(shape)}; }
};

// One discrete LIF update: u' = u + (x - u) / tau_m, spike where u' >= v_th,
// then reset the spiking units (to v_reset, or by subtracting v_th).
inline std::pair<LayerState, Tensor> lif_step(const LayerState& state, const Tensor& input,
                                              const LIFParams& p, ops::SpikeFn fn = {}) {
  Tensor charged = ops::lif_charge(state.membrane, input, p.tau_m);
  Tensor spikes = ops::spike_threshold(charged, p.v_th, fn);
  Tensor next = ops::lif_reset(charged, spikes, p.v_reset, p.reset == ResetMode::Soft, p.v_th);
  return {LayerState{next, spikes}, spikes};
}

}  // namespace topo
