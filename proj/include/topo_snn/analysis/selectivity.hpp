#pragma once

// Category selectivity: per-unit Welch t maps (one category versus the rest)
// and overlap between two categories' maps.

#include <string>
#include <vector>

#include "topo_snn/analysis/maps.hpp"
#include "topo_snn/stats.hpp"

namespace topo {

inline constexpr double kSelectivityTCrit = 3.0;

struct SelectivityMap {
  std::vector<std::string> categories;
  std::vector<std::vector<double>> t;   // [category][unit]
  std::vector<std::vector<char>> mask;  // t > t_crit
  double t_crit = kSelectivityTCrit;

  std::size_t units() const { return t.empty() ? 0 : t.front().size(); }
  std::size_t index_of(const std::string& name) const {
    for (std::size_t k = 0; k < categories.size(); ++k)
      if (categories[k] == name) return k;
    throw ConfigError("category '" + name + "' is not in the selectivity map");
  }
};

// responses[k] holds one ResponseMatrix per category (units x exemplars).
inline SelectivityMap selectivity_tmap(const std::vector<std::string>& names,
                                       const std::vector<ResponseMatrix>& responses,
                                       double t_crit = kSelectivityTCrit) {
  if (names.size() != responses.size() || responses.size() < 2)
    throw ConfigError("selectivity needs at least 2 named categories");
  const std::size_t units = responses.front().units;
  for (const auto& r : responses) {
    if (r.units != units) throw ContractViolation("selectivity_tmap: categories disagree on unit count");
    if (r.stimuli < 2) throw ConfigError("selectivity needs at least 2 exemplars per category");
  }
  SelectivityMap m;
  m.categories = names;
  m.t_crit = t_crit;
  for (std::size_t k = 0; k < responses.size(); ++k) {
    std::vector<double> tv(units);
    std::vector<char> mk(units);
    for (std::size_t u = 0; u < units; ++u) {
      const auto in = responses[k].row(u);
      std::vector<double> out;
      for (std::size_t j = 0; j < responses.size(); ++j)
        if (j != k) {
          const auto r = responses[j].row(u);
          out.insert(out.end(), r.begin(), r.end());
        }
      tv[u] = stats::welch_t(in, out);
      mk[u] = tv[u] > t_crit ? 1 : 0;
    }
    m.t.push_back(std::move(tv));
    m.mask.push_back(std::move(mk));
  }
  return m;
}

inline SelectivityMap selectivity_tmap(const Network& net, const std::vector<CategoryStimulusSet>& sets, int layer_id,
                                       double t_crit = kSelectivityTCrit) {
  std::vector<std::string> names;
  std::vector<ResponseMatrix> resp;
  for (const auto& s : sets) {
    names.push_back(to_string(s.category));
    resp.push_back(probe_responses(net, s.exemplars, layer_id));
  }
  return selectivity_tmap(names, resp, t_crit);
}

struct PatchOverlap {
  double correlation = 0.0;
  bool degenerate = false;
  double jaccard = 0.0;  // 0 when neither mask has a significant unit
};

inline PatchOverlap patch_overlap(const SelectivityMap& m, std::size_t a, std::size_t b) {
  if (a >= m.t.size() || b >= m.t.size()) throw ConfigError("patch_overlap: category index out of range");
  PatchOverlap out;
  const auto p = stats::pearson(m.t[a], m.t[b]);
  out.correlation = p.value;
  out.degenerate = p.degenerate;
  std::size_t inter = 0, uni = 0;
  for (std::size_t u = 0; u < m.units(); ++u) {
    inter += m.mask[a][u] && m.mask[b][u];
    uni += m.mask[a][u] || m.mask[b][u];
  }
  out.jaccard = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
  return out;
}

}  // namespace topo
