#pragma once

// Run configuration: sectioned "key = value" text, overridable from the
// command line with --set section.key=value. Every key is declared in one
// table (fields()), which drives parsing, validation of unknown keys and the
// canonical re-emission stored in run metadata.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "topo_snn/analysis/attacks.hpp"
#include "topo_snn/analysis/selectivity.hpp"
#include "topo_snn/dataset.hpp"
#include "topo_snn/network.hpp"
#include "topo_snn/preopt.hpp"
#include "topo_snn/stimuli.hpp"
#include "topo_snn/train.hpp"

namespace topo {

inline constexpr const char* kOutputRootEnv = "TOPO_SNN_OUT";

struct DataConfig {
  std::string format = "synthetic";
  std::string path;
  std::size_t samples = 400;  // synthetic only
  std::size_t classes = 4;
  std::size_t channels = 3;
  std::size_t size = 16;
  double train_ratio = 0.8;
  double csv_scale = 1.0;
};

struct NetworkConfig {
  std::size_t timesteps = 4;
  LIFParams lif;
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::vector<int> constrained{0, 1, 2};
  std::vector<std::string> groups{"V1", "V2", "V4"};
  std::string head_group = "IT";
  double init_gain = 3.0;
};

struct SheetConfig {
  double height_mm = 2.5;
  double width_mm = 2.5;
  std::string dir;  // empty = <out>/sheets
};

struct PreoptRunConfig {
  std::size_t aux_epochs = 5;
  std::size_t levels = 20;
  double t0 = 0.01;
  double decay = 0.7;
  std::size_t proposals_per_unit = 10;
  std::size_t max_pairs = 200000;
};

struct AnalysisConfig {
  std::vector<int> layers;  // empty = constrained layers
  bool maps = true;
  bool correlation = true;
  bool selectivity = true;
  bool entropy = true;
  bool fisher = true;
  double smoothness_radius_mm = 0.2;
  std::size_t smoothness_shuffles = 20;
  std::size_t corr_bins = 10;
  double corr_max_mm = 0.0;
  std::size_t corr_images = 128;
  std::size_t corr_max_pairs = 200000;
  std::size_t bootstrap = 1000;
  std::size_t category_exemplars = 16;
  double t_crit = kSelectivityTCrit;
  std::size_t fisher_samples = 16;
};

struct AttackConfig {
  std::vector<std::string> kinds{"gaussian", "fgsm", "pgd", "mask"};
  std::vector<double> gaussian{0.0, 0.05, 0.1, 0.2};
  std::vector<double> fgsm{0.0, 0.01, 0.03, 0.1};
  std::vector<double> pgd{0.0, 0.01, 0.03, 0.1};
  std::vector<double> mask{0.0, 0.1, 0.3, 0.5};
  std::size_t pgd_steps = 10;
  std::size_t samples = 0;  // 0 = whole validation split
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  DataConfig data;
  NetworkConfig network;
  SheetConfig sheet;
  STCConfig stc;
  TrainConfig train;
  PreoptRunConfig preopt;
  BatteryConfig battery{8, 4, 4, 2, 1.0, 4.0, 16, 3};
  AnalysisConfig analysis;
  AttackConfig attack;
  std::string checkpoint;  // analyze / attack input; empty = <out>/checkpoint.json
  std::string resume;      // train: continue from this checkpoint
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range '" + v + "'");
  }
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

// Shortest text that parses back to the same double.
inline std::string fmt(double d) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s;
}

}  // namespace config_detail

struct ConfigField {
  std::string key;  // section.name
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigField>& config_fields() {
  using namespace config_detail;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto num = [&f](std::string key, auto member) {
      f.push_back({key, [key, member](RunConfig& c, const std::string& v) { member(c) = to_double(key, v); },
                   [member](const RunConfig& c) { return fmt(member(const_cast<RunConfig&>(c))); }});
    };
    auto uint = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const std::string& v) {
                     member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_uint(key, v));
                   },
                   [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }});
    };
    auto str = [&f](std::string key, auto member) {
      f.push_back({key, [member](RunConfig& c, const std::string& v) { member(c) = v; },
                   [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }});
    };
    auto flag = [&f](std::string key, auto member) {
      f.push_back({key, [key, member](RunConfig& c, const std::string& v) { member(c) = to_bool(key, v); },
                   [member](const RunConfig& c) {
                     return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false");
                   }});
    };
    auto reals = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const std::string& v) {
                     std::vector<double> out;
                     for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
                     member(c) = out;
                   },
                   [member](const RunConfig& c) {
                     return join(member(const_cast<RunConfig&>(c)), [](double d) { return fmt(d); });
                   }});
    };
    auto ints = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const std::string& v) {
                     std::vector<int> out;
                     for (const auto& s : split_list(v)) out.push_back(to_int(key, s));
                     member(c) = out;
                   },
                   [member](const RunConfig& c) {
                     return join(member(const_cast<RunConfig&>(c)), [](int i) { return std::to_string(i); });
                   }});
    };
    auto sizes = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const std::string& v) {
                     std::vector<std::size_t> out;
                     for (const auto& s : split_list(v)) out.push_back(to_uint(key, s));
                     member(c) = out;
                   },
                   [member](const RunConfig& c) {
                     return join(member(const_cast<RunConfig&>(c)), [](std::size_t i) { return std::to_string(i); });
                   }});
    };
    auto words = [&f](std::string key, auto member) {
      f.push_back({key, [member](RunConfig& c, const std::string& v) { member(c) = split_list(v); },
                   [member](const RunConfig& c) {
                     return join(member(const_cast<RunConfig&>(c)), [](const std::string& s) { return s; });
                   }});
    };

    uint("run.seed", [](RunConfig& c) -> auto& { return c.seed; });
    str("run.out", [](RunConfig& c) -> auto& { return c.out; });
    str("run.checkpoint", [](RunConfig& c) -> auto& { return c.checkpoint; });
    str("run.resume", [](RunConfig& c) -> auto& { return c.resume; });

    str("data.format", [](RunConfig& c) -> auto& { return c.data.format; });
    str("data.path", [](RunConfig& c) -> auto& { return c.data.path; });
    uint("data.samples", [](RunConfig& c) -> auto& { return c.data.samples; });
    uint("data.classes", [](RunConfig& c) -> auto& { return c.data.classes; });
    uint("data.channels", [](RunConfig& c) -> auto& { return c.data.channels; });
    uint("data.size", [](RunConfig& c) -> auto& { return c.data.size; });
    num("data.train_ratio", [](RunConfig& c) -> auto& { return c.data.train_ratio; });
    num("data.csv_scale", [](RunConfig& c) -> auto& { return c.data.csv_scale; });

    uint("network.timesteps", [](RunConfig& c) -> auto& { return c.network.timesteps; });
    num("network.tau_m", [](RunConfig& c) -> auto& { return c.network.lif.tau_m; });
    num("network.v_th", [](RunConfig& c) -> auto& { return c.network.lif.v_th; });
    num("network.v_reset", [](RunConfig& c) -> auto& { return c.network.lif.v_reset; });
    f.push_back({"network.reset",
                 [](RunConfig& c, const std::string& v) { c.network.lif.reset = reset_mode_from(v); },
                 [](const RunConfig& c) { return to_string(c.network.lif.reset); }});
    sizes("network.channels", [](RunConfig& c) -> auto& { return c.network.channels; });
    uint("network.kernel", [](RunConfig& c) -> auto& { return c.network.kernel; });
    uint("network.pool", [](RunConfig& c) -> auto& { return c.network.pool; });
    ints("network.constrained", [](RunConfig& c) -> auto& { return c.network.constrained; });
    words("network.groups", [](RunConfig& c) -> auto& { return c.network.groups; });
    str("network.head_group", [](RunConfig& c) -> auto& { return c.network.head_group; });
    num("network.init_gain", [](RunConfig& c) -> auto& { return c.network.init_gain; });

    num("sheet.height_mm", [](RunConfig& c) -> auto& { return c.sheet.height_mm; });
    num("sheet.width_mm", [](RunConfig& c) -> auto& { return c.sheet.width_mm; });
    str("sheet.dir", [](RunConfig& c) -> auto& { return c.sheet.dir; });

    num("stc.alpha", [](RunConfig& c) -> auto& { return c.stc.alpha; });
    num("stc.beta", [](RunConfig& c) -> auto& { return c.stc.beta; });
    uint("stc.window", [](RunConfig& c) -> auto& { return c.stc.window; });
    uint("stc.clusters", [](RunConfig& c) -> auto& { return c.stc.clusters_per_layer; });
    reals("stc.edge_mm", [](RunConfig& c) -> auto& { return c.stc.cluster_edge_mm; });
    ints("stc.layers", [](RunConfig& c) -> auto& { return c.stc.layers; });

    uint("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    uint("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    num("train.lr", [](RunConfig& c) -> auto& { return c.train.lr; });
    num("train.momentum", [](RunConfig& c) -> auto& { return c.train.momentum; });
    num("train.weight_decay", [](RunConfig& c) -> auto& { return c.train.weight_decay; });
    str("train.optimizer", [](RunConfig& c) -> auto& { return c.train.optimizer; });
    str("train.schedule", [](RunConfig& c) -> auto& { return c.train.schedule; });
    uint("train.checkpoint_every", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; });
    flag("train.normalize_inputs", [](RunConfig& c) -> auto& { return c.train.normalize_inputs; });

    uint("preopt.aux_epochs", [](RunConfig& c) -> auto& { return c.preopt.aux_epochs; });
    uint("preopt.levels", [](RunConfig& c) -> auto& { return c.preopt.levels; });
    num("preopt.t0", [](RunConfig& c) -> auto& { return c.preopt.t0; });
    num("preopt.decay", [](RunConfig& c) -> auto& { return c.preopt.decay; });
    uint("preopt.proposals_per_unit", [](RunConfig& c) -> auto& { return c.preopt.proposals_per_unit; });
    uint("preopt.max_pairs", [](RunConfig& c) -> auto& { return c.preopt.max_pairs; });

    uint("battery.orientations", [](RunConfig& c) -> auto& { return c.battery.n_orient; });
    uint("battery.frequencies", [](RunConfig& c) -> auto& { return c.battery.n_freq; });
    uint("battery.phases", [](RunConfig& c) -> auto& { return c.battery.n_phase; });
    uint("battery.hues", [](RunConfig& c) -> auto& { return c.battery.n_hue; });
    num("battery.f_min", [](RunConfig& c) -> auto& { return c.battery.f_min; });
    num("battery.f_max", [](RunConfig& c) -> auto& { return c.battery.f_max; });

    ints("analysis.layers", [](RunConfig& c) -> auto& { return c.analysis.layers; });
    flag("analysis.maps", [](RunConfig& c) -> auto& { return c.analysis.maps; });
    flag("analysis.correlation", [](RunConfig& c) -> auto& { return c.analysis.correlation; });
    flag("analysis.selectivity", [](RunConfig& c) -> auto& { return c.analysis.selectivity; });
    flag("analysis.entropy", [](RunConfig& c) -> auto& { return c.analysis.entropy; });
    flag("analysis.fisher", [](RunConfig& c) -> auto& { return c.analysis.fisher; });
    num("analysis.smoothness_radius_mm", [](RunConfig& c) -> auto& { return c.analysis.smoothness_radius_mm; });
    uint("analysis.smoothness_shuffles", [](RunConfig& c) -> auto& { return c.analysis.smoothness_shuffles; });
    uint("analysis.corr_bins", [](RunConfig& c) -> auto& { return c.analysis.corr_bins; });
    num("analysis.corr_max_mm", [](RunConfig& c) -> auto& { return c.analysis.corr_max_mm; });
    uint("analysis.corr_images", [](RunConfig& c) -> auto& { return c.analysis.corr_images; });
    uint("analysis.corr_max_pairs", [](RunConfig& c) -> auto& { return c.analysis.corr_max_pairs; });
    uint("analysis.bootstrap", [](RunConfig& c) -> auto& { return c.analysis.bootstrap; });
    uint("analysis.category_exemplars", [](RunConfig& c) -> auto& { return c.analysis.category_exemplars; });
    num("analysis.t_crit", [](RunConfig& c) -> auto& { return c.analysis.t_crit; });
    uint("analysis.fisher_samples", [](RunConfig& c) -> auto& { return c.analysis.fisher_samples; });

    words("attack.kinds", [](RunConfig& c) -> auto& { return c.attack.kinds; });
    reals("attack.gaussian", [](RunConfig& c) -> auto& { return c.attack.gaussian; });
    reals("attack.fgsm", [](RunConfig& c) -> auto& { return c.attack.fgsm; });
    reals("attack.pgd", [](RunConfig& c) -> auto& { return c.attack.pgd; });
    reals("attack.mask", [](RunConfig& c) -> auto& { return c.attack.mask; });
    uint("attack.pgd_steps", [](RunConfig& c) -> auto& { return c.attack.pgd_steps; });
    uint("attack.samples", [](RunConfig& c) -> auto& { return c.attack.samples; });
    return f;
  }();
  return fields;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields())
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

// Applies "section.key=value".
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  set_config_value(c, config_detail::trim(assignment.substr(0, eq)), config_detail::trim(assignment.substr(eq + 1)));
}

// Parses config text on top of `base`. `origin` prefixes error messages.
inline RunConfig parse_config(std::istream& is, const std::string& origin = "<config>", RunConfig base = {}) {
  using config_detail::trim;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    const auto key = section + "." + trim(line.substr(0, eq));
    try {
      set_config_value(base, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_config(is, path);
}

// Canonical text: every key, in table order, grouped by section.
inline std::string config_to_string(const RunConfig& c) {
  std::string out, section;
  for (const auto& f : config_fields()) {
    const auto dot = f.key.find('.');
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(c) + "\n";
  }
  return out;
}

inline NetworkSpec network_spec_from(const RunConfig& c) {
  NetworkSpec s;
  s.in_channels = c.data.channels;
  s.in_h = s.in_w = c.data.size;
  s.timesteps = c.network.timesteps;
  s.num_classes = c.data.classes;
  s.lif = c.network.lif;
  for (std::size_t i = 0; i < c.network.channels.size(); ++i) {
    BlockSpec b;
    b.kind = LayerKind::Conv;
    b.channels = c.network.channels[i];
    b.kernel = c.network.kernel;
    b.pad = c.network.kernel / 2;
    b.pool = c.network.pool;
    b.group = i < c.network.groups.size() ? c.network.groups[i] : "";
    s.blocks.push_back(b);
  }
  s.constrained = c.network.constrained;
  s.head_group = c.network.head_group;
  return s;
}

inline DatasetOptions dataset_options_from(const RunConfig& c) {
  DatasetOptions o;
  o.train_ratio = c.data.train_ratio;
  o.split_seed = derive_seed(c.seed, "data-split");
  o.num_classes = c.data.classes;
  o.channels = c.data.channels;
  o.height = c.data.size;
  o.csv_scale = c.data.csv_scale;
  return o;
}

inline TrainConfig train_config_from(const RunConfig& c) {
  TrainConfig t = c.train;
  t.seed = derive_seed(c.seed, "train");
  t.stc = c.stc;
  return t;
}

inline BatteryConfig battery_config_from(const RunConfig& c) {
  BatteryConfig b = c.battery;
  b.size = c.data.size;
  b.channels = c.data.channels;
  return b;
}

// Checks every cross-field constraint before any compute.
inline void validate_config(const RunConfig& c) {
  dataset_format_from(c.data.format);
  if (c.data.format != "synthetic" && c.data.path.empty())
    throw ConfigError("data.path is required for format '" + c.data.format + "'");
  if (c.data.format == "synthetic" && c.data.samples < 2) throw ConfigError("data.samples must be >= 2");
  if (c.data.classes < 2) throw ConfigError("data.classes must be >= 2");
  if (c.data.channels == 0 || c.data.size == 0) throw ConfigError("data.channels and data.size must be positive");
  if (!(c.data.train_ratio > 0.0 && c.data.train_ratio < 1.0)) throw ConfigError("data.train_ratio must be in (0, 1)");
  if (c.network.channels.empty()) throw ConfigError("network.channels must list at least one block");
  if (c.network.kernel % 2 == 0) throw ConfigError("network.kernel must be odd");
  if (!(c.network.init_gain > 0.0)) throw ConfigError("network.init_gain must be positive");
  network_spec_from(c).validate();
  if (!(c.sheet.height_mm > 0.0) || !(c.sheet.width_mm > 0.0)) throw ConfigError("sheet dimensions must be positive");
  train_config_from(c).validate();
  if (c.preopt.levels > 0 && !(c.preopt.t0 >= 0.0)) throw ConfigError("preopt.t0 must be >= 0");
  if (!(c.preopt.decay > 0.0 && c.preopt.decay <= 1.0)) throw ConfigError("preopt.decay must be in (0, 1]");
  if (c.battery.n_orient < 1 || c.battery.n_freq < 1 || c.battery.n_phase < 1)
    throw ConfigError("battery sizes must be >= 1");
  if (c.battery.n_hue < 1 || c.battery.n_hue > 2) throw ConfigError("battery.hues must be 1 or 2");
  if (c.battery.n_hue == 2 && c.data.channels != 3) throw ConfigError("battery.hues = 2 needs 3-channel inputs");
  if (!(c.battery.f_min > 0.0) || c.battery.f_max < c.battery.f_min)
    throw ConfigError("battery frequencies need 0 < f_min <= f_max");
  for (int id : c.analysis.layers)
    if (id < 0 || static_cast<std::size_t>(id) >= c.network.channels.size())
      throw ConfigError("analysis.layers: layer " + std::to_string(id) + " does not exist");
  if (!(c.analysis.smoothness_radius_mm > 0.0)) throw ConfigError("analysis.smoothness_radius_mm must be positive");
  if (c.analysis.corr_bins < 1) throw ConfigError("analysis.corr_bins must be >= 1");
  if (c.analysis.corr_images < 2) throw ConfigError("analysis.corr_images must be >= 2");
  if (c.analysis.category_exemplars < 2) throw ConfigError("analysis.category_exemplars must be >= 2");
  if (c.analysis.fisher_samples < 1) throw ConfigError("analysis.fisher_samples must be >= 1");
  for (const auto& k : c.attack.kinds) attack_kind_from(k);
  for (const auto* grid : {&c.attack.gaussian, &c.attack.fgsm, &c.attack.pgd, &c.attack.mask})
    for (double s : *grid)
      if (!(s >= 0.0)) throw ConfigError("attack strengths must be >= 0");
  for (double s : c.attack.mask)
    if (s > 1.0) throw ConfigError("attack.mask fractions must be <= 1");
  if (c.attack.pgd_steps < 1) throw ConfigError("attack.pgd_steps must be >= 1");
}

// run.out resolved against $TOPO_SNN_OUT when it is relative.
inline std::filesystem::path output_dir(const RunConfig& c) {
  std::filesystem::path p(c.out);
  if (p.is_relative())
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) p = std::filesystem::path(root) / p;
  return p;
}

inline std::filesystem::path sheet_dir(const RunConfig& c) {
  return c.sheet.dir.empty() ? output_dir(c) / "sheets" : std::filesystem::path(c.sheet.dir);
}

inline std::filesystem::path checkpoint_path(const RunConfig& c) {
  return c.checkpoint.empty() ? output_dir(c) / "checkpoint.json" : std::filesystem::path(c.checkpoint);
}

}  // namespace topo
