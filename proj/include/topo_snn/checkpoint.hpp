#pragma once

// Checkpoint files: one JSON document holding the network spec, LIF
// parameters, every weight tensor, the cortical sheets and the optimizer
// state needed to resume. Layout is described in docs/formats.md.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topo_snn/error.hpp"
#include "topo_snn/network.hpp"
#include "topo_snn/sheet.hpp"
#include "topo_snn/train.hpp"

namespace topo {

inline constexpr const char* kCheckpointFormat = "topo-snn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

using Json = nlohmann::json;

struct Checkpoint {
  Network net;
  std::vector<CorticalSheet> sheets;
  TrainState state;
  bool finished = false;
  std::string config;  // resolved run configuration text
};

namespace ckpt_detail {

inline Json block_json(const BlockSpec& b) {
  return {{"kind", b.kind == LayerKind::Conv ? "conv" : "dense"},
          {"channels", b.channels},
          {"kernel", b.kernel},
          {"stride", b.stride},
          {"pad", b.pad},
          {"out_h", b.out_h},
          {"out_w", b.out_w},
          {"pool", b.pool},
          {"group", b.group}};
}

// Field access that reports the JSON path on failure.
template <class T>
T get(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw CorruptArtifact(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArtifact(where + "." + key + ": " + e.what());
  }
}

inline const Json& sub(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw CorruptArtifact(where + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace ckpt_detail

inline Json spec_to_json(const NetworkSpec& s) {
  Json blocks = Json::array();
  for (const auto& b : s.blocks) blocks.push_back(ckpt_detail::block_json(b));
  return {{"in_channels", s.in_channels},
          {"in_h", s.in_h},
          {"in_w", s.in_w},
          {"timesteps", s.timesteps},
          {"num_classes", s.num_classes},
          {"lif",
           {{"tau_m", s.lif.tau_m}, {"v_th", s.lif.v_th}, {"v_reset", s.lif.v_reset}, {"reset", to_string(s.lif.reset)}}},
          {"blocks", blocks},
          {"constrained", s.constrained},
          {"head_group", s.head_group},
          {"input_mean", s.input_mean},
          {"input_std", s.input_std}};
}

inline NetworkSpec spec_from_json(const Json& j, const std::string& where = "spec") {
  using ckpt_detail::get;
  NetworkSpec s;
  s.in_channels = get<std::size_t>(j, "in_channels", where);
  s.in_h = get<std::size_t>(j, "in_h", where);
  s.in_w = get<std::size_t>(j, "in_w", where);
  s.timesteps = get<std::size_t>(j, "timesteps", where);
  s.num_classes = get<std::size_t>(j, "num_classes", where);
  const auto& lif = ckpt_detail::sub(j, "lif", where);
  s.lif.tau_m = get<double>(lif, "tau_m", where + ".lif");
  s.lif.v_th = get<double>(lif, "v_th", where + ".lif");
  s.lif.v_reset = get<double>(lif, "v_reset", where + ".lif");
  try {
    s.lif.reset = reset_mode_from(get<std::string>(lif, "reset", where + ".lif"));
  } catch (const ConfigError& e) {
    throw CorruptArtifact(where + ".lif.reset: " + e.what());
  }
  const auto& blocks = ckpt_detail::sub(j, "blocks", where);
  if (!blocks.is_array()) throw CorruptArtifact(where + ".blocks: expected an array");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto w = where + ".blocks[" + std::to_string(i) + "]";
    const auto& b = blocks[i];
    BlockSpec blk;
    const auto kind = get<std::string>(b, "kind", w);
    if (kind != "conv" && kind != "dense") throw CorruptArtifact(w + ".kind: unknown layer kind '" + kind + "'");
    blk.kind = kind == "conv" ? LayerKind::Conv : LayerKind::Dense;
    blk.channels = get<std::size_t>(b, "channels", w);
    blk.kernel = get<std::size_t>(b, "kernel", w);
    blk.stride = get<std::size_t>(b, "stride", w);
    blk.pad = get<std::size_t>(b, "pad", w);
    blk.out_h = get<std::size_t>(b, "out_h", w);
    blk.out_w = get<std::size_t>(b, "out_w", w);
    blk.pool = get<std::size_t>(b, "pool", w);
    blk.group = get<std::string>(b, "group", w);
    s.blocks.push_back(blk);
  }
  s.constrained = get<std::vector<int>>(j, "constrained", where);
  s.head_group = get<std::string>(j, "head_group", where);
  s.input_mean = get<std::vector<double>>(j, "input_mean", where);
  s.input_std = get<std::vector<double>>(j, "input_std", where);
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw CorruptArtifact(where + ": " + e.what());
  }
  return s;
}

inline Json sheet_to_json(const CorticalSheet& s) {
  Json xy = Json::array();
  for (const auto& p : s.coords()) xy.push_back({p.x, p.y});
  return {{"layer_id", s.layer_id()},
          {"height_mm", s.height_mm()},
          {"width_mm", s.width_mm()},
          {"channels", s.channels()},
          {"height", s.map_height()},
          {"width", s.map_width()},
          {"coords", xy}};
}

inline CorticalSheet sheet_from_json(const Json& j, const std::string& where) {
  using ckpt_detail::get;
  const auto xy = get<std::vector<std::vector<double>>>(j, "coords", where);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    if (xy[i].size() != 2) throw CorruptArtifact(where + ".coords[" + std::to_string(i) + "]: expected [x, y]");
    pts.push_back({xy[i][0], xy[i][1]});
  }
  try {
    return CorticalSheet(get<int>(j, "layer_id", where), get<double>(j, "height_mm", where),
                         get<double>(j, "width_mm", where), get<std::size_t>(j, "channels", where),
                         get<std::size_t>(j, "height", where), get<std::size_t>(j, "width", where), std::move(pts));
  } catch (const ContractViolation& e) {
    throw CorruptArtifact(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CorruptArtifact(where + ": " + e.what());
  }
}

inline Json checkpoint_to_json(const Network& net, const std::vector<CorticalSheet>& sheets, const TrainState& state,
                               bool finished, const std::string& config) {
  Json params = Json::array();
  for (const auto& p : net.params())
    params.push_back({{"name", p.name},
                      {"group", p.group},
                      {"shape", p.value.shape()},
                      {"data", std::vector<double>(p.value.data().begin(), p.value.data().end())}});
  Json sh = Json::array();
  for (const auto& s : sheets) sh.push_back(sheet_to_json(s));
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"spec", spec_to_json(net.spec())},
          {"params", params},
          {"sheets", sh},
          {"train", {{"step", state.step}, {"finished", finished}, {"velocity", state.velocity}}},
          {"config", config}};
}

inline Checkpoint checkpoint_from_json(const Json& j, const std::string& origin) {
  using ckpt_detail::get;
  const auto fmt = get<std::string>(j, "format", origin);
  if (fmt != kCheckpointFormat) throw CorruptArtifact(origin + ": not a checkpoint (format '" + fmt + "')");
  const int version = get<int>(j, "version", origin);
  if (version != kCheckpointVersion)
    throw CorruptArtifact(origin + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  const auto spec = spec_from_json(ckpt_detail::sub(j, "spec", origin), origin + ".spec");
  const auto& params = ckpt_detail::sub(j, "params", origin);
  if (!params.is_array()) throw CorruptArtifact(origin + ".params: expected an array");
  std::vector<NamedParam> ps;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto w = origin + ".params[" + std::to_string(i) + "]";
    auto shape = get<Shape>(params[i], "shape", w);
    auto data = get<std::vector<double>>(params[i], "data", w);
    if (shape.empty() || shape_size(shape) != data.size())
      throw CorruptArtifact(w + ": " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
    for (auto d : shape)
      if (d == 0) throw CorruptArtifact(w + ": zero dimension in shape " + shape_str(shape));
    ps.push_back({get<std::string>(params[i], "name", w), get<std::string>(params[i], "group", w),
                  Tensor(std::move(shape), std::move(data), true)});
  }
  c.net = Network(spec, std::move(ps));
  const auto& sheets = ckpt_detail::sub(j, "sheets", origin);
  if (!sheets.is_array()) throw CorruptArtifact(origin + ".sheets: expected an array");
  for (std::size_t i = 0; i < sheets.size(); ++i)
    c.sheets.push_back(sheet_from_json(sheets[i], origin + ".sheets[" + std::to_string(i) + "]"));
  for (const auto& s : c.sheets) {
    if (s.layer_id() < 0 || static_cast<std::size_t>(s.layer_id()) >= spec.blocks.size())
      throw CorruptArtifact(origin + ": sheet for missing layer " + std::to_string(s.layer_id()));
    if (s.size() != spec.layer_shape(static_cast<std::size_t>(s.layer_id())).size())
      throw CorruptArtifact(origin + ": sheet for layer " + std::to_string(s.layer_id()) + " has " +
                            std::to_string(s.size()) + " units, layer has " +
                            std::to_string(spec.layer_shape(static_cast<std::size_t>(s.layer_id())).size()));
  }
  const auto& tr = ckpt_detail::sub(j, "train", origin);
  c.state.step = get<std::size_t>(tr, "step", origin + ".train");
  c.finished = get<bool>(tr, "finished", origin + ".train");
  c.state.velocity = get<std::vector<std::vector<double>>>(tr, "velocity", origin + ".train");
  if (!c.state.velocity.empty()) {
    if (c.state.velocity.size() != c.net.params().size())
      throw CorruptArtifact(origin + ".train.velocity: " + std::to_string(c.state.velocity.size()) +
                            " buffers for " + std::to_string(c.net.params().size()) + " parameters");
    for (std::size_t i = 0; i < c.state.velocity.size(); ++i)
      if (c.state.velocity[i].size() != c.net.params()[i].value.size())
        throw CorruptArtifact(origin + ".train.velocity[" + std::to_string(i) + "]: size mismatch");
  }
  c.config = get<std::string>(j, "config", origin);
  return c;
}

inline void save_checkpoint(const std::string& path, const Network& net, const std::vector<CorticalSheet>& sheets,
                            const TrainState& state, bool finished, const std::string& config = "") {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path);
  os << checkpoint_to_json(net, sheets, state, finished, config).dump() << '\n';
  if (!os) throw ConfigError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptArtifact(path + ": not valid JSON at byte " + std::to_string(e.byte) + " (" + e.what() + ")");
  }
  return checkpoint_from_json(j, path);
}

}  // namespace topo
