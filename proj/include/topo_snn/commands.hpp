#pragma once

// The four run-level commands behind the topo-snn executable. Each takes a
// resolved RunConfig, validates it before any compute and writes its
// artifacts under the run's output directory.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topo_snn/analysis/attacks.hpp"
#include "topo_snn/analysis/information.hpp"
#include "topo_snn/analysis/maps.hpp"
#include "topo_snn/analysis/selectivity.hpp"
#include "topo_snn/checkpoint.hpp"
#include "topo_snn/config.hpp"
#include "topo_snn/preopt.hpp"
#include "topo_snn/report.hpp"
#include "topo_snn/train.hpp"

namespace topo {

namespace fs = std::filesystem;

// Progress messages; null silences them.
struct CommandContext {
  std::ostream* log = &std::cerr;
};

inline DatasetHandle load_run_dataset(const RunConfig& c) {
  const auto opt = dataset_options_from(c);
  if (c.data.format == "synthetic")
    return make_synthetic_dataset(c.data.samples, c.data.classes, c.data.channels, c.data.size,
                                  derive_seed(c.seed, "synthetic-data"), opt);
  if (!fs::exists(c.data.path)) throw ConfigError("dataset not found: " + c.data.path);
  auto d = load_dataset(c.data.path, dataset_format_from(c.data.format), opt);
  if (d.channels != c.data.channels || d.height != c.data.size || d.width != c.data.size)
    throw ConfigError("dataset " + c.data.path + " holds " + std::to_string(d.channels) + "x" +
                      std::to_string(d.height) + "x" + std::to_string(d.width) + " images, config expects " +
                      std::to_string(c.data.channels) + "x" + std::to_string(c.data.size) + "x" +
                      std::to_string(c.data.size));
  return d;
}

inline fs::path sheet_file(const RunConfig& c, int layer_id) {
  return sheet_dir(c) / ("layer" + std::to_string(layer_id) + ".sheet");
}

// Jittered-grid embeddings of every constrained layer.
inline std::vector<CorticalSheet> fresh_sheets(const RunConfig& c, const NetworkSpec& spec) {
  std::vector<CorticalSheet> out;
  for (int id : spec.constrained) {
    const auto s = spec.layer_shape(static_cast<std::size_t>(id));
    out.push_back(embed_layer(id, s.c, s.h, s.w, c.sheet.height_mm, c.sheet.width_mm, derive_seed(c.seed, "sheet", id)));
  }
  return out;
}

inline std::vector<Image> battery_images(const Battery& b) {
  std::vector<Image> out;
  out.reserve(b.specs.size());
  for (const auto& g : b.specs) out.push_back(make_grating(g));
  return out;
}

// The first n indices of the validation split, or of the whole set when the
// split is smaller than `at_least`.
inline std::vector<std::size_t> probe_indices(const DatasetHandle& d, std::size_t n, std::size_t at_least = 2) {
  std::vector<std::size_t> src = d.val;
  if (src.size() < at_least) {
    src.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) src[i] = i;
  }
  if (n && src.size() > n) src.resize(n);
  return src;
}

namespace cmd_detail {

inline void say(const CommandContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << '\n' << std::flush;
}

inline Json base_manifest(const std::string& command, const RunConfig& c) {
  return {{"command", command}, {"seed", c.seed}, {"config", config_to_string(c)}};
}

// Spec fields fixed by the configuration (normalisation is learned from data).
inline Json structural_spec(const NetworkSpec& s) {
  auto j = spec_to_json(s);
  j.erase("input_mean");
  j.erase("input_std");
  return j;
}

}  // namespace cmd_detail

// ---------------------------------------------------------------- preopt

inline Json cmd_preopt(const RunConfig& c, const CommandContext& ctx = {}) {
  using cmd_detail::say;
  validate_config(c);
  const auto data = load_run_dataset(c);
  const auto spec = network_spec_from(c);
  auto sheets = fresh_sheets(c, spec);
  const auto dir = sheet_dir(c);
  fs::create_directories(dir);
  fs::create_directories(output_dir(c));

  Json manifest = cmd_detail::base_manifest("preopt", c);
  Json layers = Json::array();
  CsvWriter log(output_dir(c) / "preopt_log.csv", {"layer", "level", "temperature", "J"});
  if (c.preopt.levels > 0) {
    Network aux(spec, derive_seed(c.seed, "aux-init"), c.network.init_gain);
    if (c.preopt.aux_epochs > 0) {
      TrainConfig t = train_config_from(c);
      t.epochs = c.preopt.aux_epochs;
      t.seed = derive_seed(c.seed, "aux-train");
      t.stc.alpha = t.stc.beta = 0.0;
      t.checkpoint_every = 0;
      say(ctx, "preopt: training auxiliary network for " + std::to_string(t.epochs) + " epochs");
      aux = train(std::move(aux), data, t, {}).net;
    }
    const auto battery = grating_battery(battery_config_from(c));
    const auto images = battery_images(battery);
    for (auto& sheet : sheets) {
      const auto resp = probe_responses(aux, images, sheet.layer_id());
      std::vector<std::vector<double>> rows(resp.units);
      for (std::size_t u = 0; u < resp.units; ++u) rows[u] = resp.row(u);
      PreoptConfig pc;
      pc.levels = c.preopt.levels;
      pc.t0 = c.preopt.t0;
      pc.decay = c.preopt.decay;
      pc.proposals_per_unit = c.preopt.proposals_per_unit;
      pc.max_pairs = c.preopt.max_pairs;
      pc.seed = derive_seed(c.seed, "preopt", sheet.layer_id());
      say(ctx, "preopt: annealing layer " + std::to_string(sheet.layer_id()) + " (" + std::to_string(sheet.size()) +
                   " units)");
      auto res = preoptimize_positions(sheet, rows, pc);
      for (std::size_t k = 0; k < res.level_j.size(); ++k)
        log.row(sheet.layer_id(), k, res.temperatures[k], res.level_j[k]);
      layers.push_back({{"layer", sheet.layer_id()},
                        {"units", sheet.size()},
                        {"j_initial", res.j_initial},
                        {"j_final", res.j_final},
                        {"accepted", res.accepted}});
      sheet = std::move(res.sheet);
    }
  } else {
    for (const auto& sheet : sheets) layers.push_back({{"layer", sheet.layer_id()}, {"units", sheet.size()}});
  }
  Json files = Json::array();
  for (const auto& sheet : sheets) {
    const auto p = sheet_file(c, sheet.layer_id());
    save_sheet(p.string(), sheet);
    files.push_back(p.filename().string());
  }
  manifest["layers"] = layers;
  manifest["sheet_files"] = files;
  write_manifest(output_dir(c) / "preopt_manifest.json", manifest);
  say(ctx, "preopt: wrote " + std::to_string(sheets.size()) + " sheet files to " + dir.string());
  return manifest;
}

// ---------------------------------------------------------------- train

inline std::vector<std::string> train_log_header(const std::vector<int>& stc_ids) {
  std::vector<std::string> h{"step", "epoch", "lr", "task_loss", "long_loss_mean", "short_loss_mean", "stc_loss",
                             "total_loss", "batch_accuracy"};
  for (int id : stc_ids) {
    h.push_back("long_loss_layer" + std::to_string(id));
    h.push_back("short_loss_layer" + std::to_string(id));
  }
  return h;
}

inline std::vector<std::string> train_log_cells(const TrainLogRow& r, const std::vector<int>& stc_ids) {
  using C = CsvWriter;
  std::vector<std::string> v{C::cell(r.step),  C::cell(r.epoch),      C::cell(r.lr),
                             C::cell(r.task),  C::cell(r.long_mean),  C::cell(r.short_mean),
                             C::cell(r.stc),   C::cell(r.total),      C::cell(r.batch_accuracy)};
  for (int id : stc_ids) {
    const LayerLossRow* hit = nullptr;
    for (const auto& l : r.layers)
      if (l.layer_id == id) hit = &l;
    v.push_back(C::cell(hit ? hit->long_term : 0.0));
    v.push_back(C::cell(hit ? hit->short_term : 0.0));
  }
  return v;
}

// Sheets for training: files written by preopt, required when the STC term is
// active; otherwise fresh embeddings stand in for missing files.
inline std::vector<CorticalSheet> train_sheets(const RunConfig& c, const NetworkSpec& spec) {
  const bool active = c.stc.alpha > 0.0 || c.stc.beta > 0.0;
  const auto fresh = fresh_sheets(c, spec);
  std::vector<CorticalSheet> out;
  for (std::size_t i = 0; i < spec.constrained.size(); ++i) {
    const int id = spec.constrained[i];
    const auto p = sheet_file(c, id);
    if (fs::exists(p)) {
      out.push_back(load_sheet(p.string()));
      if (out.back().layer_id() != id)
        throw ConfigError(p.string() + " holds the sheet of layer " + std::to_string(out.back().layer_id()) +
                          ", expected layer " + std::to_string(id));
    } else if (active) {
      throw ConfigError("missing sheet file " + p.string() + " (run preopt first, or set sheet.dir)");
    } else {
      out.push_back(fresh[i]);
    }
  }
  return out;
}

inline Json cmd_train(const RunConfig& c, const CommandContext& ctx = {}) {
  using cmd_detail::say;
  validate_config(c);
  const auto data = load_run_dataset(c);
  const auto spec = network_spec_from(c);
  const auto tc = train_config_from(c);
  const auto out = output_dir(c);
  fs::create_directories(out);
  const auto config_text = config_to_string(c);

  Network net;
  std::vector<CorticalSheet> sheets;
  std::optional<TrainState> resume;
  if (!c.resume.empty()) {
    auto ck = load_checkpoint(c.resume);
    if (cmd_detail::structural_spec(ck.net.spec()) != cmd_detail::structural_spec(spec))
      throw ConfigError("checkpoint " + c.resume + " was trained with a different network configuration");
    net = std::move(ck.net);
    sheets = std::move(ck.sheets);
    resume = ck.state;
    say(ctx, "train: resuming from step " + std::to_string(ck.state.step));
  } else {
    sheets = train_sheets(c, spec);
    net = Network(spec, derive_seed(c.seed, "init"), c.network.init_gain);
  }
  check_training_setup(net.spec(), data, tc, sheets);

  const bool active = tc.stc.alpha > 0.0 || tc.stc.beta > 0.0;
  const auto stc_ids = active ? stc_layers(spec, tc.stc) : std::vector<int>{};
  const auto log_path = out / "train_log.csv";
  const auto header = train_log_header(stc_ids);
  std::vector<std::string> kept;
  if (resume && fs::exists(log_path)) {
    // Rows past the checkpoint are replayed, so drop them.
    std::ifstream is(log_path);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      try {
        if (std::stoull(line.substr(0, comma)) < resume->step) kept.push_back(line);
      } catch (const std::exception&) {
      }
    }
  }
  CsvWriter log(log_path, header);
  for (const auto& l : kept) log.row_strings({l});

  const std::size_t total = total_steps(data, tc), spe = steps_per_epoch(data, tc);
  TrainHooks hooks;
  hooks.on_step = [&](const TrainLogRow& r) {
    log.row_strings(train_log_cells(r, stc_ids));
    if ((r.step + 1) % spe == 0) {
      log.flush();
      std::ostringstream m;
      m << "train: epoch " << r.epoch + 1 << "/" << tc.epochs << " task " << r.task << " total " << r.total;
      say(ctx, m.str());
    }
  };
  hooks.on_checkpoint = [&](const Network& n, const TrainState& st) {
    log.flush();
    save_checkpoint((out / ("checkpoint_step" + std::to_string(st.step) + ".json")).string(), n, sheets, st, false,
                    config_text);
  };
  auto model = train(std::move(net), data, tc, sheets, hooks, resume);
  log.flush();
  save_checkpoint((out / "checkpoint.json").string(), model.net, model.sheets, model.state, model.finished,
                  config_text);

  Json manifest = cmd_detail::base_manifest("train", c);
  manifest["stc"] = {{"alpha", tc.stc.alpha}, {"beta", tc.stc.beta}, {"active", active}, {"layers", stc_ids}};
  manifest["steps"] = model.state.step;
  manifest["total_steps"] = total;
  manifest["finished"] = model.finished;
  manifest["train_accuracy"] = evaluate(model.net, data, data.train);
  manifest["val_accuracy"] = evaluate(model.net, data, data.val);
  write_manifest(out / "train_manifest.json", manifest);
  say(ctx, "train: val accuracy " + format_real(manifest["val_accuracy"].get<double>()));
  return manifest;
}

// ---------------------------------------------------------------- analyze

inline Checkpoint load_run_checkpoint(const RunConfig& c) { return load_checkpoint(checkpoint_path(c).string()); }

inline std::vector<int> analysis_layers(const RunConfig& c, const Checkpoint& ck) {
  const auto ids = c.analysis.layers.empty() ? ck.net.spec().constrained : c.analysis.layers;
  for (int id : ids) {
    bool found = false;
    for (const auto& s : ck.sheets) found = found || s.layer_id() == id;
    if (!found) throw ConfigError("checkpoint has no cortical sheet for layer " + std::to_string(id));
  }
  return ids;
}

inline std::uint64_t smoothness_seed(const RunConfig& c, int layer_id, TuningParam kind) {
  return derive_seed(derive_seed(c.seed, "analysis-smoothness", static_cast<std::uint64_t>(layer_id)), to_string(kind));
}

namespace cmd_detail {

inline std::vector<TuningParam> map_kinds(const Battery& b) {
  std::vector<TuningParam> k{TuningParam::Orientation, TuningParam::Frequency};
  if (b.hues.size() > 1) k.push_back(TuningParam::Hue);
  return k;
}

inline std::vector<Rgb> map_colors(const PreferenceMap& m, const Battery& b) {
  switch (m.kind) {
    case TuningParam::Orientation: return preference_colors(m.preference, m.defined, 0.0, std::numbers::pi, true);
    case TuningParam::Frequency:
      return preference_colors(m.preference, m.defined, 0.0, static_cast<double>(b.frequencies.size() - 1), false);
    case TuningParam::Hue:
      return preference_colors(m.preference, m.defined, 0.0, static_cast<double>(b.hues.size() - 1), false);
  }
  return {};
}

inline Json maps_for_layer(const RunConfig& c, const Network& net, const CorticalSheet& sheet, const Battery& battery,
                           const std::vector<Image>& images, const fs::path& dir) {
  const int id = sheet.layer_id();
  const auto tag = "layer" + std::to_string(id);
  const auto resp = probe_responses(net, images, id);
  Json out = Json::object();
  std::vector<PreferenceMap> maps;
  for (auto kind : map_kinds(battery)) {
    const auto curves = tuning_curves(resp, battery, kind);
    {
      CsvWriter t(dir / ("tuning_" + tag + "_" + to_string(kind) + ".csv"), {"unit", "value", "rate"});
      for (const auto& cv : curves)
        for (std::size_t i = 0; i < cv.values.size(); ++i) t.row(cv.unit, cv.values[i], cv.rates[i]);
    }
    auto pm = preference_map(curves, kind);
    Json entry{{"defined_units", pm.defined_count()}, {"units", pm.size()}};
    if (pm.defined_count() >= 2) {
      const auto seed = smoothness_seed(c, id, kind);
      const auto sm = smoothness(pm, sheet, c.analysis.smoothness_radius_mm, seed, c.analysis.smoothness_shuffles);
      const auto null = smoothness(shuffled_map(pm, derive_seed(seed, "null-map")), sheet,
                                   c.analysis.smoothness_radius_mm, seed, c.analysis.smoothness_shuffles);
      entry["smoothness"] = sm.value;
      entry["deviation"] = sm.deviation;
      entry["chance_deviation"] = sm.chance;
      entry["shuffled_smoothness"] = null.value;
      entry["low_smoothness"] = sm.value - null.value < 0.1;
    } else {
      entry["smoothness"] = nullptr;
      entry["low_smoothness"] = true;
    }
    const auto colors = map_colors(pm, battery);
    write_sheet_svg(dir / ("map_" + tag + "_" + to_string(kind) + ".svg"), sheet, colors,
                    "layer " + std::to_string(id) + " " + to_string(kind) + " preference");
    write_sheet_ppm(dir / ("map_" + tag + "_" + to_string(kind) + ".ppm"), sheet, colors);
    out[to_string(kind)] = entry;
    maps.push_back(std::move(pm));
  }
  std::vector<std::string> header{"unit", "channel", "row", "col", "x_mm", "y_mm"};
  for (const auto& m : maps)
    for (const auto* suffix : {"", "_magnitude", "_defined"}) header.push_back(to_string(m.kind) + suffix);
  CsvWriter w(dir / ("maps_" + tag + ".csv"), header);
  for (std::size_t u = 0; u < sheet.size(); ++u) {
    const auto ui = sheet.unit_index(u);
    const auto p = sheet.at(u);
    std::vector<std::string> row{CsvWriter::cell(u),    CsvWriter::cell(ui.c),  CsvWriter::cell(ui.h),
                                 CsvWriter::cell(ui.w), CsvWriter::cell(p.x),   CsvWriter::cell(p.y)};
    for (const auto& m : maps) {
      row.push_back(CsvWriter::cell(m.preference[u]));
      row.push_back(CsvWriter::cell(m.magnitude[u]));
      row.push_back(CsvWriter::cell(static_cast<int>(m.defined[u])));
    }
    w.row_strings(row);
  }
  return out;
}

inline Json correlation_for_layer(const RunConfig& c, const SpikeTensor& spikes, const CorticalSheet& sheet,
                                  const fs::path& dir) {
  const int id = sheet.layer_id();
  CorrelationDistanceOptions o;
  o.bins = c.analysis.corr_bins;
  o.max_distance = c.analysis.corr_max_mm;
  o.max_pairs = c.analysis.corr_max_pairs;
  o.bootstrap = c.analysis.bootstrap;
  o.seed = derive_seed(c.seed, "analysis-correlation", static_cast<std::uint64_t>(id));
  const auto curve = correlation_vs_distance(spikes, sheet, o);
  CsvWriter w(dir / ("corr_distance_layer" + std::to_string(id) + ".csv"),
              {"bin", "center_mm", "mean", "ci_low", "ci_high", "pairs", "present"});
  std::vector<double> x, y;
  for (std::size_t b = 0; b < curve.centers.size(); ++b) {
    w.row(b, curve.centers[b], curve.means[b], curve.lo[b], curve.hi[b], curve.counts[b],
          static_cast<int>(curve.present[b]));
    if (curve.present[b]) {
      x.push_back(curve.centers[b]);
      y.push_back(curve.means[b]);
    }
  }
  Json out{{"pairs", curve.pairs}, {"degenerate_pairs", curve.degenerate}, {"bins_present", x.size()}};
  if (!y.empty()) out["nearest_bin"] = y.front();
  if (x.size() >= 3) {
    const auto t = stats::spearman_negative_test(x, y, 2000, derive_seed(o.seed, "spearman"));
    out["spearman"] = t.statistic;
    out["spearman_p"] = t.p_value;
  }
  return out;
}

inline Json selectivity_for_layer(const RunConfig& c, const Network& net, const CorticalSheet& sheet,
                                  const std::vector<CategoryStimulusSet>& sets, const fs::path& dir) {
  const int id = sheet.layer_id();
  const auto tag = "layer" + std::to_string(id);
  const auto m = selectivity_tmap(net, sets, id, c.analysis.t_crit);
  std::vector<std::string> header{"unit"};
  for (const auto& n : m.categories) header.push_back("t_" + n);
  CsvWriter w(dir / ("selectivity_" + tag + ".csv"), header);
  for (std::size_t u = 0; u < m.units(); ++u) {
    std::vector<std::string> row{CsvWriter::cell(u)};
    for (const auto& t : m.t) row.push_back(CsvWriter::cell(t[u]));
    w.row_strings(row);
  }
  Json out = Json::object();
  Json counts = Json::object();
  for (std::size_t k = 0; k < m.categories.size(); ++k) {
    counts[m.categories[k]] =
        static_cast<std::size_t>(std::count(m.mask[k].begin(), m.mask[k].end(), static_cast<char>(1)));
    std::vector<char> all(m.units(), 1);
    const auto colors = preference_colors(m.t[k], all, -2.0 * m.t_crit, 2.0 * m.t_crit, false);
    write_sheet_svg(dir / ("tmap_" + tag + "_" + m.categories[k] + ".svg"), sheet, colors,
                    "layer " + std::to_string(id) + " t-value, " + m.categories[k] + " vs rest");
  }
  out["selective_units"] = counts;
  Json overlaps = Json::array();
  for (std::size_t a = 0; a < m.categories.size(); ++a)
    for (std::size_t b = a + 1; b < m.categories.size(); ++b) {
      const auto p = patch_overlap(m, a, b);
      overlaps.push_back({{"a", m.categories[a]},
                          {"b", m.categories[b]},
                          {"correlation", p.correlation},
                          {"degenerate", p.degenerate},
                          {"jaccard", p.jaccard}});
    }
  out["overlap"] = overlaps;
  return out;
}

}  // namespace cmd_detail

inline Json cmd_analyze(const RunConfig& c, const CommandContext& ctx = {}) {
  using cmd_detail::say;
  validate_config(c);
  auto ck = load_run_checkpoint(c);
  const auto ids = analysis_layers(c, ck);
  const auto dir = output_dir(c) / "analysis";
  fs::create_directories(dir);
  const auto& spec = ck.net.spec();
  if (spec.in_channels != c.data.channels || spec.in_h != c.data.size)
    throw ConfigError("checkpoint network takes " + std::to_string(spec.in_channels) + "x" +
                      std::to_string(spec.in_h) + " inputs, config data is " + std::to_string(c.data.channels) + "x" +
                      std::to_string(c.data.size));

  Json manifest = cmd_detail::base_manifest("analyze", c);
  Json layers = Json::object();
  for (int id : ids) layers[std::to_string(id)] = Json::object();

  if (c.analysis.maps) {
    const auto battery = grating_battery(battery_config_from(c));
    const auto images = battery_images(battery);
    for (int id : ids) {
      say(ctx, "analyze: preference maps, layer " + std::to_string(id));
      layers[std::to_string(id)]["maps"] =
          cmd_detail::maps_for_layer(c, ck.net, sheet_for_layer(ck.sheets, id), battery, images, dir);
    }
  }

  const bool need_data = c.analysis.correlation || c.analysis.entropy || c.analysis.fisher;
  if (need_data) {
    const auto data = load_run_dataset(c);
    if (c.analysis.correlation || c.analysis.entropy) {
      const auto idx = probe_indices(data, c.analysis.corr_images);
      auto [x, y] = data.batch(idx);
      std::unique_ptr<CsvWriter> ent;
      if (c.analysis.entropy) ent = std::make_unique<CsvWriter>(dir / "entropy.csv", std::vector<std::string>{"layer", "axis", "timestep", "bits"});
      for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
        const int id = static_cast<int>(l);
        const bool mapped = std::find(ids.begin(), ids.end(), id) != ids.end();
        if (!c.analysis.entropy && !mapped) continue;
        const auto spikes = layer_spikes(ck.net, x, id);
        if (c.analysis.entropy) {
          const auto hl = spike_entropy(spikes, EntropyAxis::Layer);
          const auto ht = spike_entropy(spikes, EntropyAxis::Timestep);
          ent->row(id, "layer", "all", hl[0]);
          for (std::size_t t = 0; t < ht.size(); ++t) ent->row(id, "timestep", t, ht[t]);
          manifest["entropy"][std::to_string(id)] = {{"layer_bits", hl[0]}, {"timestep_bits", ht}};
        }
        if (c.analysis.correlation && mapped) {
          say(ctx, "analyze: correlation vs distance, layer " + std::to_string(id));
          layers[std::to_string(id)]["correlation"] =
              cmd_detail::correlation_for_layer(c, spikes, sheet_for_layer(ck.sheets, id), dir);
        }
      }
    }
    if (c.analysis.fisher) {
      say(ctx, "analyze: Fisher information");
      const auto idx = probe_indices(data, c.analysis.fisher_samples, 1);
      auto [x, y] = data.batch(idx);
      CsvWriter w(dir / "fisher.csv", {"timestep", "group", "information"});
      Json fj = Json::array();
      for (std::size_t t = 1; t <= spec.timesteps; ++t) {
        const auto r = fisher_information(ck.net, x, y, t);
        Json groups = Json::object();
        for (std::size_t g = 0; g < r.groups.size(); ++g) {
          w.row(t, r.groups[g], r.per_group[g]);
          groups[r.groups[g]] = r.per_group[g];
        }
        w.row(t, "total", r.total);
        fj.push_back({{"timestep", t}, {"total", r.total}, {"groups", groups}});
      }
      manifest["fisher"] = fj;
    }
  }

  if (c.analysis.selectivity) {
    say(ctx, "analyze: category selectivity");
    const auto sets = make_category_sets(derive_seed(c.seed, "analysis-categories"), c.analysis.category_exemplars,
                                         c.data.channels, c.data.size);
    for (int id : ids)
      layers[std::to_string(id)]["selectivity"] =
          cmd_detail::selectivity_for_layer(c, ck.net, sheet_for_layer(ck.sheets, id), sets, dir);
  }

  manifest["layers"] = layers;
  write_manifest(dir / "manifest.json", manifest);
  say(ctx, "analyze: wrote " + dir.string());
  return manifest;
}

// ---------------------------------------------------------------- attack

inline std::uint64_t attack_seed(const RunConfig& c, AttackKind kind, std::size_t strength_index) {
  return derive_seed(derive_seed(c.seed, "attack", strength_index), to_string(kind));
}

inline Json cmd_attack(const RunConfig& c, const CommandContext& ctx = {}) {
  using cmd_detail::say;
  validate_config(c);
  auto ck = load_run_checkpoint(c);
  const auto data = load_run_dataset(c);
  const auto& spec = ck.net.spec();
  if (data.channels != spec.in_channels || data.height != spec.in_h || data.width != spec.in_w)
    throw ConfigError("dataset images do not match the checkpoint network input");
  const auto idx = probe_indices(data, c.attack.samples, 1);
  auto [x, y] = data.batch(idx);
  const auto dir = output_dir(c) / "attack";
  fs::create_directories(dir);

  CsvWriter w(dir / "robustness.csv", {"kind", "strength", "clean_accuracy", "accuracy", "delta"});
  Json manifest = cmd_detail::base_manifest("attack", c);
  manifest["samples"] = idx.size();
  Json kinds = Json::object();
  for (const auto& name : c.attack.kinds) {
    const auto kind = attack_kind_from(name);
    const auto& grid = kind == AttackKind::Gaussian ? c.attack.gaussian
                       : kind == AttackKind::Fgsm   ? c.attack.fgsm
                       : kind == AttackKind::Pgd    ? c.attack.pgd
                                                    : c.attack.mask;
    say(ctx, "attack: " + name);
    Json rows = Json::array();
    double prev = 2.0;
    bool monotone = true;
    for (std::size_t s = 0; s < grid.size(); ++s) {
      const auto r = attack(ck.net, x, y, kind, grid[s], attack_seed(c, kind, s), c.attack.pgd_steps);
      w.row(to_string(kind), grid[s], r.clean_accuracy, r.attacked_accuracy, r.delta());
      rows.push_back({{"strength", grid[s]}, {"accuracy", r.attacked_accuracy}});
      monotone = monotone && r.attacked_accuracy <= prev;
      prev = r.attacked_accuracy;
    }
    // Reported only: noise can make accuracy tick up between grid points.
    kinds[to_string(kind)] = {{"rows", rows}, {"monotone_nonincreasing", monotone}};
  }
  manifest["clean_accuracy"] = accuracy(predict(ck.net, x), y);
  manifest["kinds"] = kinds;
  write_manifest(dir / "manifest.json", manifest);
  say(ctx, "attack: wrote " + (dir / "robustness.csv").string());
  return manifest;
}

}  // namespace topo
