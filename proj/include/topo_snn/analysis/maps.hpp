#pragma once

// Response probing, tuning curves, preference maps, map smoothness and the
// pairwise correlation-versus-distance curve.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/network.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/sheet.hpp"
#include "topo_snn/stats.hpp"
#include "topo_snn/stc.hpp"
#include "topo_snn/stimuli.hpp"

namespace topo {

// Time-averaged firing rate of every unit of one layer for every stimulus.
struct ResponseMatrix {
  std::size_t units = 0, stimuli = 0;
  std::vector<double> rates;  // [u * stimuli + s]

  double at(std::size_t u, std::size_t s) const { return rates[u * stimuli + s]; }
  std::vector<double> row(std::size_t u) const {
    return {rates.begin() + static_cast<std::ptrdiff_t>(u * stimuli),
            rates.begin() + static_cast<std::ptrdiff_t>((u + 1) * stimuli)};
  }
};

// Spike trains of one layer for a batch of images, (units, B, T).
inline SpikeTensor layer_spikes(const Network& net, const Tensor& images, int layer_id) {
  if (layer_id < 0 || static_cast<std::size_t>(layer_id) >= net.spec().blocks.size())
    throw ConfigError("layer " + std::to_string(layer_id) + " does not exist");
  NoGradGuard guard;
  ForwardOptions opt;
  opt.record_all = true;
  auto res = net.forward(images, opt);
  return res.records.at(static_cast<std::size_t>(layer_id)).values();
}

inline ResponseMatrix probe_responses(const Network& net, const std::vector<Image>& stimuli, int layer_id,
                                      std::size_t batch = 64) {
  TOPO_REQUIRE(!stimuli.empty(), "probe_responses: no stimuli");
  ResponseMatrix m;
  m.stimuli = stimuli.size();
  for (std::size_t start = 0; start < stimuli.size(); start += batch) {
    const std::size_t end = std::min(stimuli.size(), start + batch);
    std::vector<Image> chunk(stimuli.begin() + static_cast<std::ptrdiff_t>(start),
                             stimuli.begin() + static_cast<std::ptrdiff_t>(end));
    const auto st = layer_spikes(net, stack_images(chunk), layer_id);
    if (m.rates.empty()) {
      m.units = st.units;
      m.rates.assign(m.units * m.stimuli, 0.0);
    }
    const auto r = firing_rate_vectors(st);
    for (std::size_t u = 0; u < st.units; ++u)
      for (std::size_t b = 0; b < st.trials; ++b) m.rates[u * m.stimuli + start + b] = r[u * st.trials + b];
  }
  return m;
}

enum class TuningParam { Orientation, Frequency, Hue };

inline std::string to_string(TuningParam p) {
  switch (p) {
    case TuningParam::Orientation: return "orientation";
    case TuningParam::Frequency: return "frequency";
    case TuningParam::Hue: return "hue";
  }
  return "?";
}

struct TuningCurve {
  std::size_t unit = 0;
  std::vector<double> values;  // swept parameter grid
  std::vector<double> rates;   // mean rate per grid value
};

// Marginalises a battery response matrix onto one swept parameter.
inline std::vector<TuningCurve> tuning_curves(const ResponseMatrix& resp, const Battery& battery, TuningParam param) {
  if (resp.stimuli != battery.specs.size())
    throw ContractViolation("tuning_curves: response matrix covers " + std::to_string(resp.stimuli) +
                            " stimuli, battery has " + std::to_string(battery.specs.size()));
  std::vector<double> grid;
  switch (param) {
    case TuningParam::Orientation: grid = battery.orientations; break;
    case TuningParam::Frequency: grid = battery.frequencies; break;
    case TuningParam::Hue:
      for (std::size_t h = 0; h < battery.hues.size(); ++h) grid.push_back(static_cast<double>(h));
      break;
  }
  const std::size_t no = battery.orientations.size(), nf = battery.frequencies.size();
  const std::size_t np = battery.phases.size(), nh = battery.hues.size();
  std::vector<TuningCurve> curves(resp.units);
  for (std::size_t u = 0; u < resp.units; ++u) {
    auto& c = curves[u];
    c.unit = u;
    c.values = grid;
    c.rates.assign(grid.size(), 0.0);
    std::vector<double> count(grid.size(), 0.0);
    for (std::size_t o = 0; o < no; ++o)
      for (std::size_t f = 0; f < nf; ++f)
        for (std::size_t p = 0; p < np; ++p)
          for (std::size_t h = 0; h < nh; ++h) {
            const std::size_t k = param == TuningParam::Orientation ? o : param == TuningParam::Frequency ? f : h;
            c.rates[k] += resp.at(u, battery.index(o, f, p, h));
            count[k] += 1.0;
          }
    for (std::size_t k = 0; k < grid.size(); ++k) c.rates[k] /= count[k];
  }
  return curves;
}

inline std::vector<TuningCurve> tuning_curves(const Network& net, const Battery& battery, int layer_id,
                                              TuningParam param) {
  std::vector<Image> stimuli;
  for (const auto& s : battery.specs) stimuli.push_back(make_grating(s));
  return tuning_curves(probe_responses(net, stimuli, layer_id), battery, param);
}

struct PreferenceMap {
  TuningParam kind = TuningParam::Orientation;
  std::vector<double> preference;  // radians in [0, pi) or grid index
  std::vector<double> magnitude;
  std::vector<char> defined;

  std::size_t size() const { return preference.size(); }
  std::size_t defined_count() const { return static_cast<std::size_t>(std::count(defined.begin(), defined.end(), 1)); }
};

// Orientation preference from the doubled-angle vector sum; undefined when the
// sum vanishes relative to the total response.
inline std::optional<std::pair<double, double>> orientation_vector_sum(std::span<const double> theta,
                                                                       std::span<const double> r) {
  std::complex<double> z{0.0, 0.0};
  double total = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    z += r[k] * std::polar(1.0, 2.0 * theta[k]);
    total += r[k];
  }
  if (!(total > 0.0) || std::abs(z) <= 1e-9 * total) return std::nullopt;
  double pref = 0.5 * std::arg(z);
  if (pref < 0.0) pref += std::numbers::pi;
  if (pref >= std::numbers::pi) pref -= std::numbers::pi;
  return std::pair{pref, std::abs(z) / total};
}

inline PreferenceMap preference_map(const std::vector<TuningCurve>& curves, TuningParam kind) {
  PreferenceMap m;
  m.kind = kind;
  for (const auto& c : curves) {
    if (c.rates.size() != c.values.size() || c.rates.empty())
      throw ContractViolation("preference_map: curve " + std::to_string(c.unit) + " is not on a full grid");
    if (kind == TuningParam::Orientation) {
      auto v = orientation_vector_sum(c.values, c.rates);
      m.preference.push_back(v ? v->first : 0.0);
      m.magnitude.push_back(v ? v->second : 0.0);
      m.defined.push_back(v ? 1 : 0);
    } else {
      const auto it = std::max_element(c.rates.begin(), c.rates.end());
      const double mx = *it, mean = stats::mean(c.rates);
      const bool ok = mx > 0.0;
      m.preference.push_back(static_cast<double>(it - c.rates.begin()));
      m.magnitude.push_back(ok ? (mx - mean) / mx : 0.0);
      m.defined.push_back(ok ? 1 : 0);
    }
  }
  return m;
}

// Distance between two preferences: circular with period pi for orientation,
// absolute index difference otherwise.
inline double preference_distance(TuningParam kind, double a, double b) {
  if (kind != TuningParam::Orientation) return std::abs(a - b);
  double d = std::fmod(std::abs(a - b), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

namespace maps_detail {

inline std::optional<double> neighbour_mean(TuningParam kind, const std::vector<double>& prefs,
                                            const std::vector<std::size_t>& nbrs) {
  if (kind == TuningParam::Orientation) {
    std::complex<double> z{0.0, 0.0};
    for (auto j : nbrs) z += std::polar(1.0, 2.0 * prefs[j]);
    if (std::abs(z) <= 1e-12 * static_cast<double>(nbrs.size())) return std::nullopt;
    double m = 0.5 * std::arg(z);
    if (m < 0.0) m += std::numbers::pi;
    return m;
  }
  double s = 0.0;
  for (auto j : nbrs) s += prefs[j];
  return s / static_cast<double>(nbrs.size());
}

// Mean deviation of each unit from the mean preference of its neighbours.
inline std::optional<double> mean_deviation(TuningParam kind, const std::vector<double>& prefs,
                                            const std::vector<std::vector<std::size_t>>& nbrs,
                                            const std::vector<std::size_t>& units) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t a = 0; a < units.size(); ++a) {
    if (nbrs[a].empty()) continue;
    auto m = neighbour_mean(kind, prefs, nbrs[a]);
    if (!m) continue;
    total += preference_distance(kind, prefs[units[a]], *m);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

}  // namespace maps_detail

struct SmoothnessResult {
  double value = 0.0;
  double deviation = 0.0;  // mean neighbour deviation of the map itself
  double chance = 0.0;     // the same statistic averaged over shuffles
  std::size_t units = 0;   // units that entered the statistic
};

// 1 - deviation / chance, clipped to [0, 1]. Shuffles permute preferences
// among defined units; a map whose shuffles show no deviation scores 1.
inline SmoothnessResult smoothness(const PreferenceMap& map, const CorticalSheet& sheet, double radius_mm,
                                   std::uint64_t seed = 0, std::size_t shuffles = 20) {
  if (map.size() != sheet.size())
    throw ContractViolation("smoothness: map has " + std::to_string(map.size()) + " units, sheet has " +
                            std::to_string(sheet.size()));
  std::vector<std::size_t> units;
  for (std::size_t u = 0; u < map.size(); ++u)
    if (map.defined[u]) units.push_back(u);
  if (units.size() < 2) throw ConfigError("smoothness needs at least 2 units with a defined preference");

  // Neighbour lists among defined units, as indices into the preference vector.
  std::vector<std::vector<std::size_t>> nbrs(units.size());
  std::size_t with_nbrs = 0;
  for (std::size_t a = 0; a < units.size(); ++a) {
    for (std::size_t b = 0; b < units.size(); ++b)
      if (a != b && sheet.distance(units[a], units[b]) <= radius_mm) nbrs[a].push_back(units[b]);
    with_nbrs += !nbrs[a].empty();
  }
  if (with_nbrs == 0)
    throw ConfigError("no unit has a neighbour within " + std::to_string(radius_mm) + " mm; increase the radius");

  SmoothnessResult out;
  out.units = with_nbrs;
  out.deviation = maps_detail::mean_deviation(map.kind, map.preference, nbrs, units).value_or(0.0);
  Rng rng(derive_seed(seed, "smoothness-shuffle"));
  std::vector<double> shuffled = map.preference;
  std::vector<double> values;
  for (auto u : units) values.push_back(map.preference[u]);
  double chance = 0.0;
  for (std::size_t s = 0; s < shuffles; ++s) {
    std::shuffle(values.begin(), values.end(), rng);
    for (std::size_t a = 0; a < units.size(); ++a) shuffled[units[a]] = values[a];
    chance += maps_detail::mean_deviation(map.kind, shuffled, nbrs, units).value_or(0.0);
  }
  out.chance = chance / static_cast<double>(shuffles);
  if (!(out.chance > 0.0)) {
    out.value = 1.0;
  } else {
    out.value = std::clamp(1.0 - out.deviation / out.chance, 0.0, 1.0);
  }
  return out;
}

// Preferences permuted among defined units (the null model used above).
inline PreferenceMap shuffled_map(const PreferenceMap& map, std::uint64_t seed) {
  PreferenceMap out = map;
  std::vector<std::size_t> units;
  for (std::size_t u = 0; u < map.size(); ++u)
    if (map.defined[u]) units.push_back(u);
  std::vector<double> v;
  for (auto u : units) v.push_back(map.preference[u]);
  Rng rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  for (std::size_t a = 0; a < units.size(); ++a) out.preference[units[a]] = v[a];
  return out;
}

struct CorrelationDistanceCurve {
  std::vector<double> centers;
  std::vector<double> means;  // NaN-free: check `present`
  std::vector<double> lo, hi; // bootstrap 95% interval
  std::vector<std::size_t> counts;
  std::vector<char> present;
  std::size_t pairs = 0;       // non-degenerate pairs used
  std::size_t degenerate = 0;  // pairs skipped for zero variance
};

struct CorrelationDistanceOptions {
  std::size_t bins = 10;
  double max_distance = 0.0;  // 0 = largest observed pair distance
  std::size_t max_pairs = 200000;
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 0;
};

// Pearson correlation of per-trial rate vectors for unit pairs, binned by
// sheet distance. Degenerate pairs (a silent or constant unit) are skipped.
inline CorrelationDistanceCurve correlation_vs_distance(const SpikeTensor& spikes, const CorticalSheet& sheet,
                                                        const CorrelationDistanceOptions& opt = {}) {
  if (spikes.trials < 2) throw ContractViolation("correlation_vs_distance: need at least 2 trials");
  if (spikes.units != sheet.size()) throw ContractViolation("correlation_vs_distance: spike/sheet unit count mismatch");
  if (opt.bins == 0) throw ConfigError("correlation_vs_distance: bins must be >= 1");
  const auto rates = firing_rate_vectors(spikes);
  const std::size_t n = spikes.units, B = spikes.trials;
  auto rate = [&](std::size_t u) { return std::span<const double>(rates).subspan(u * B, B); };

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t total = n * (n - 1) / 2;
  if (total <= opt.max_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  } else {
    Rng rng(derive_seed(opt.seed, "corr-dist-pairs"));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < opt.max_pairs; ++k) {
      std::size_t i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::vector<double> dist, corr;
  CorrelationDistanceCurve c;
  for (auto [i, j] : pairs) {
    const auto p = stats::pearson(rate(i), rate(j));
    if (p.degenerate) {
      ++c.degenerate;
      continue;
    }
    dist.push_back(sheet.distance(i, j));
    corr.push_back(p.value);
  }
  c.pairs = corr.size();
  double dmax = opt.max_distance;
  if (!(dmax > 0.0))
    for (double d : dist) dmax = std::max(dmax, d);
  if (!(dmax > 0.0)) dmax = 1.0;
  const double width = dmax / static_cast<double>(opt.bins);
  std::vector<std::vector<double>> members(opt.bins);
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (dist[k] > dmax) continue;
    const auto b = std::min(opt.bins - 1, static_cast<std::size_t>(dist[k] / width));
    members[b].push_back(corr[k]);
  }
  Rng boot(derive_seed(opt.seed, "corr-dist-bootstrap"));
  for (std::size_t b = 0; b < opt.bins; ++b) {
    c.centers.push_back((static_cast<double>(b) + 0.5) * width);
    c.counts.push_back(members[b].size());
    c.present.push_back(members[b].empty() ? 0 : 1);
    if (members[b].empty()) {
      c.means.push_back(0.0);
      c.lo.push_back(0.0);
      c.hi.push_back(0.0);
      continue;
    }
    const double m = stats::mean(members[b]);
    c.means.push_back(m);
    std::vector<double> resampled;
    std::uniform_int_distribution<std::size_t> pick(0, members[b].size() - 1);
    for (std::size_t r = 0; r < opt.bootstrap; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < members[b].size(); ++k) s += members[b][pick(boot)];
      resampled.push_back(s / static_cast<double>(members[b].size()));
    }
    std::sort(resampled.begin(), resampled.end());
    if (resampled.empty()) {
      c.lo.push_back(m);
      c.hi.push_back(m);
    } else {
      auto q = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(resampled.size() - 1)));
        return resampled[idx];
      };
      c.lo.push_back(q(0.025));
      c.hi.push_back(q(0.975));
    }
  }
  return c;
}

}  // namespace topo
