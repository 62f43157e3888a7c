#pragma once

// Virtual cortical sheet: an injective placement of a layer's (c, h', w')
// units on an h x w millimetre plane, plus the distance and cluster queries
// used by the topographic loss.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/rng.hpp"

namespace topo {

inline constexpr double kInverseDistanceSoftening = 0.01;  // mm
inline constexpr double kMinSeparation = 1e-3;             // mm

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double euclidean(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct UnitIndex {
  std::size_t c, h, w;
};

class CorticalSheet {
 public:
  CorticalSheet() = default;
  CorticalSheet(int layer_id, double sheet_h, double sheet_w, std::size_t channels,
                std::size_t height, std::size_t width, std::vector<Point> coords)
      : layer_id_(layer_id), sheet_h_(sheet_h), sheet_w_(sheet_w), c_(channels), h_(height),
        w_(width), coords_(std::move(coords)) {
    if (!(sheet_h > 0.0) || !(sheet_w > 0.0))
      throw ConfigError("cortical sheet dimensions must be positive");
    if (coords_.size() != c_ * h_ * w_)
      throw ContractViolation("cortical sheet has " + std::to_string(coords_.size()) +
                              " coordinates for " + std::to_string(c_ * h_ * w_) + " units");
  }

  int layer_id() const { return layer_id_; }
  double height_mm() const { return sheet_h_; }
  double width_mm() const { return sheet_w_; }
  std::size_t channels() const { return c_; }
  std::size_t map_height() const { return h_; }
  std::size_t map_width() const { return w_; }
  std::size_t size() const { return coords_.size(); }
  const std::vector<Point>& coords() const { return coords_; }
  Point at(std::size_t unit) const { return coords_.at(unit); }

  UnitIndex unit_index(std::size_t unit) const {
    return {unit / (h_ * w_), (unit / w_) % h_, unit % w_};
  }
  std::size_t flat_index(UnitIndex u) const { return (u.c * h_ + u.h) * w_ + u.w; }

  double distance(std::size_t i, std::size_t j) const { return euclidean(coords_[i], coords_[j]); }

  // Exchanges the coordinates of units a and b; injectivity is preserved.
  void swap_units(std::size_t a, std::size_t b) { std::swap(coords_.at(a), coords_.at(b)); }

  friend bool operator==(const CorticalSheet&, const CorticalSheet&) = default;

 private:
  int layer_id_ = 0;
  double sheet_h_ = 0.0, sheet_w_ = 0.0;
  std::size_t c_ = 0, h_ = 0, w_ = 0;
  std::vector<Point> coords_;
};

// Checks bounds and minimum separation over all unit pairs (grid-hashed).
inline bool sheet_is_valid(const CorticalSheet& s, double min_sep = kMinSeparation) {
  std::unordered_map<std::int64_t, std::vector<std::size_t>> grid;
  auto key = [&](std::int64_t gx, std::int64_t gy) { return gx * 73856093LL ^ gy * 19349663LL; };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Point p = s.at(i);
    if (p.x < 0.0 || p.x > s.height_mm() || p.y < 0.0 || p.y > s.width_mm()) return false;
    const auto gx = static_cast<std::int64_t>(std::floor(p.x / min_sep));
    const auto gy = static_cast<std::int64_t>(std::floor(p.y / min_sep));
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = grid.find(key(gx + dx, gy + dy));
        if (it == grid.end()) continue;
        for (auto j : it->second)
          if (euclidean(p, s.at(j)) < min_sep) return false;
      }
    grid[key(gx, gy)].push_back(i);
  }
  return true;
}

// Jittered-grid embedding: the h x w sheet is tiled into H x W retinotopic
// cells; every channel's unit at (h', w') lands uniformly at random inside that
// cell, at least kMinSeparation away from every previously placed unit.
inline CorticalSheet embed_layer(int layer_id, std::size_t channels, std::size_t height,
                                 std::size_t width, double sheet_h, double sheet_w,
                                 std::uint64_t seed) {
  if (!(sheet_h > 0.0) || !(sheet_w > 0.0)) throw ConfigError("sheet dimensions must be positive");
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("layer has no units");
  const double cell_h = sheet_h / static_cast<double>(height);
  const double cell_w = sheet_w / static_cast<double>(width);
  Rng rng(seed);
  std::vector<Point> coords(channels * height * width);
  std::unordered_map<std::int64_t, std::vector<Point>> grid;
  auto key = [](std::int64_t gx, std::int64_t gy) { return gx * 73856093LL ^ gy * 19349663LL; };
  constexpr int kMaxDraws = 1000;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxDraws && !placed; ++attempt) {
          Point p{(static_cast<double>(i) + uniform01(rng)) * cell_h,
                  (static_cast<double>(j) + uniform01(rng)) * cell_w};
          const auto gx = static_cast<std::int64_t>(std::floor(p.x / kMinSeparation));
          const auto gy = static_cast<std::int64_t>(std::floor(p.y / kMinSeparation));
          bool clash = false;
          for (std::int64_t dx = -1; dx <= 1 && !clash; ++dx)
            for (std::int64_t dy = -1; dy <= 1 && !clash; ++dy) {
              auto it = grid.find(key(gx + dx, gy + dy));
              if (it == grid.end()) continue;
              for (const Point& q : it->second)
                if (euclidean(p, q) < kMinSeparation) {
                  clash = true;
                  break;
                }
            }
          if (clash) continue;
          grid[key(gx, gy)].push_back(p);
          coords[(c * height + i) * width + j] = p;
          placed = true;
        }
        if (!placed)
          throw ConfigError("cannot place " + std::to_string(channels * height * width) +
                            " units with " + std::to_string(kMinSeparation) +
                            " mm separation; use a larger sheet");
      }
  return CorticalSheet(layer_id, sheet_h, sheet_w, channels, height, width, std::move(coords));
}

using UnitPair = std::pair<std::size_t, std::size_t>;

// d_k = 1 / (delta + |p_i - p_j|) for every requested pair, in order.
inline std::vector<double> pairwise_inverse_distance(const CorticalSheet& sheet,
                                                     const std::vector<UnitPair>& pairs,
                                                     double delta = kInverseDistanceSoftening) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    if (i >= sheet.size() || j >= sheet.size())
      throw ContractViolation("pairwise_inverse_distance: unit index out of range");
    if (i == j) throw ContractViolation("pairwise_inverse_distance: self-pair " + std::to_string(i));
    d.push_back(1.0 / (delta + sheet.distance(i, j)));
  }
  return d;
}

// All C(N, 2) pairs of a member list, in (a < b) lexicographic position order.
inline std::vector<UnitPair> all_pairs(const std::vector<std::size_t>& members) {
  std::vector<UnitPair> pairs;
  pairs.reserve(members.size() * (members.size() - (members.empty() ? 0 : 1)) / 2);
  for (std::size_t a = 0; a < members.size(); ++a)
    for (std::size_t b = a + 1; b < members.size(); ++b) pairs.emplace_back(members[a], members[b]);
  return pairs;
}

struct NeuronCluster {
  Point origin;
  double edge_mm = 0.0;
  std::vector<std::size_t> members;
};

inline std::vector<std::size_t> units_in_square(const CorticalSheet& sheet, Point origin, double edge) {
  std::vector<std::size_t> members;
  for (std::size_t u = 0; u < sheet.size(); ++u) {
    const Point p = sheet.at(u);
    if (p.x >= origin.x && p.x <= origin.x + edge && p.y >= origin.y && p.y <= origin.y + edge)
      members.push_back(u);
  }
  return members;
}

// M squares of side edge_mm with uniformly random origins fully inside the
// sheet; squares holding fewer than two units are redrawn.
inline std::vector<NeuronCluster> sample_clusters(const CorticalSheet& sheet, std::size_t count,
                                                  double edge_mm, std::uint64_t seed,
                                                  int max_retries = 200) {
  if (!(edge_mm > 0.0) || edge_mm > std::min(sheet.height_mm(), sheet.width_mm()))
    throw ConfigError("cluster edge " + std::to_string(edge_mm) +
                      " mm must be positive and fit inside the sheet");
  std::vector<NeuronCluster> clusters;
  clusters.reserve(count);
  Rng rng(seed);
  for (std::size_t m = 0; m < count; ++m) {
    bool ok = false;
    for (int attempt = 0; attempt <= max_retries && !ok; ++attempt) {
      Point origin{uniform01(rng) * (sheet.height_mm() - edge_mm),
                   uniform01(rng) * (sheet.width_mm() - edge_mm)};
      auto members = units_in_square(sheet, origin, edge_mm);
      if (members.size() < 2) continue;
      clusters.push_back({origin, edge_mm, std::move(members)});
      ok = true;
    }
    if (!ok)
      throw ConfigError("no cluster with >= 2 units after " + std::to_string(max_retries) +
                        " retries; sheet too sparse for edge " + std::to_string(edge_mm) + " mm");
  }
  return clusters;
}

// Plain-text sheet format:
//   line 1: layer_id h w C H W
//   then one line per unit in (c, h', w') order: c h' w' x y
// Reals are printed with 17 significant digits so a round trip is exact.
inline void write_sheet(std::ostream& os, const CorticalSheet& s) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %.17g %.17g %zu %zu %zu\n", s.layer_id(), s.height_mm(),
                s.width_mm(), s.channels(), s.map_height(), s.map_width());
  os << buf;
  for (std::size_t u = 0; u < s.size(); ++u) {
    const auto idx = s.unit_index(u);
    std::snprintf(buf, sizeof buf, "%zu %zu %zu %.17g %.17g\n", idx.c, idx.h, idx.w, s.at(u).x,
                  s.at(u).y);
    os << buf;
  }
}

inline CorticalSheet read_sheet(std::istream& is, const std::string& origin = "<stream>") {
  std::string line;
  if (!std::getline(is, line)) throw CorruptArtifact(origin + ": empty sheet file");
  std::istringstream hs(line);
  int layer = 0;
  double h = 0, w = 0;
  std::size_t C = 0, H = 0, W = 0;
  if (!(hs >> layer >> h >> w >> C >> H >> W))
    throw CorruptArtifact(origin + ": malformed sheet header '" + line + "'");
  if (!(h > 0.0) || !(w > 0.0) || C == 0 || H == 0 || W == 0)
    throw CorruptArtifact(origin + ": invalid sheet header values");
  std::vector<Point> coords(C * H * W);
  std::vector<bool> seen(coords.size(), false);
  std::size_t lineno = 1;
  for (std::size_t n = 0; n < coords.size(); ++n) {
    ++lineno;
    if (!std::getline(is, line))
      throw CorruptArtifact(origin + ": expected " + std::to_string(coords.size()) +
                            " unit lines, file ends at line " + std::to_string(lineno));
    std::istringstream ls(line);
    std::size_t c, i, j;
    double x, y;
    if (!(ls >> c >> i >> j >> x >> y) || c >= C || i >= H || j >= W)
      throw CorruptArtifact(origin + ": malformed unit at line " + std::to_string(lineno));
    const std::size_t u = (c * H + i) * W + j;
    if (seen[u]) throw CorruptArtifact(origin + ": duplicate unit at line " + std::to_string(lineno));
    seen[u] = true;
    coords[u] = {x, y};
  }
  CorticalSheet s(layer, h, w, C, H, W, std::move(coords));
  if (!sheet_is_valid(s)) throw CorruptArtifact(origin + ": coordinates violate bounds or injectivity");
  return s;
}

inline void save_sheet(const std::string& path, const CorticalSheet& s) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write sheet file " + path);
  write_sheet(os, s);
}

inline CorticalSheet load_sheet(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open sheet file " + path);
  return read_sheet(is, path);
}

}  // namespace topo
