#pragma once

// Probe stimuli: sine gratings, the grating battery, and procedurally
// generated category proxies. Images are channel-major (C, H, W) in [0, 1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/tensor.hpp"

namespace topo {

struct Image {
  std::size_t channels = 1, height = 0, width = 0;
  std::vector<double> pixels;  // (c * H + y) * W + x

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  friend bool operator==(const Image&, const Image&) = default;
};

inline Image blank_image(std::size_t channels, std::size_t size, double fill = 0.0) {
  return {channels, size, size, std::vector<double>(channels * size * size, fill)};
}

// Stacks images into a (B, C, H, W) tensor.
inline Tensor stack_images(const std::vector<Image>& images) {
  TOPO_REQUIRE(!images.empty(), "stack_images: no images");
  const auto& f = images.front();
  std::vector<double> data;
  data.reserve(images.size() * f.pixels.size());
  for (const auto& im : images) {
    TOPO_REQUIRE(im.channels == f.channels && im.height == f.height && im.width == f.width,
                 "stack_images: images differ in shape");
    data.insert(data.end(), im.pixels.begin(), im.pixels.end());
  }
  return Tensor({images.size(), f.channels, f.height, f.width}, std::move(data));
}

enum class Hue { Achromatic, RedGreen };

inline std::string to_string(Hue h) { return h == Hue::Achromatic ? "achromatic" : "red-green"; }

struct GratingSpec {
  double theta = 0.0;  // orientation, radians
  double freq = 1.0;   // cycles per image
  double phase = 0.0;
  Hue hue = Hue::Achromatic;
  std::size_t size = 32;
  std::size_t channels = 3;
};

// pixel(x, y) = 1/2 + 1/2 sin(2 pi f (x cos(theta) + y sin(theta)) / size + phase)
// with x the column and y the row index. Achromatic writes v to every channel;
// red-green writes (v, 1 - v, 1/2) and needs 3 channels.
inline Image make_grating(const GratingSpec& g) {
  if (!(g.freq > 0.0)) throw ConfigError("grating frequency must be positive");
  if (g.size == 0) throw ConfigError("grating size must be positive");
  if (g.hue == Hue::RedGreen && g.channels != 3) throw ConfigError("red-green gratings need 3 channels");
  Image im = blank_image(g.channels, g.size);
  const double k = 2.0 * std::numbers::pi * g.freq / static_cast<double>(g.size);
  const double c = std::cos(g.theta), s = std::sin(g.theta);
  for (std::size_t y = 0; y < g.size; ++y)
    for (std::size_t x = 0; x < g.size; ++x) {
      const double arg = k * (static_cast<double>(x) * c + static_cast<double>(y) * s) + g.phase;
      const double v = std::clamp(0.5 + 0.5 * std::sin(arg), 0.0, 1.0);
      if (g.hue == Hue::Achromatic) {
        for (std::size_t ch = 0; ch < g.channels; ++ch) im.at(ch, y, x) = v;
      } else {
        im.at(0, y, x) = v;
        im.at(1, y, x) = 1.0 - v;
        im.at(2, y, x) = 0.5;
      }
    }
  return im;
}

struct BatteryConfig {
  std::size_t n_orient = 8;
  std::size_t n_freq = 4;
  std::size_t n_phase = 4;
  std::size_t n_hue = 2;  // 1 = achromatic only, 2 = achromatic and red-green
  double f_min = 1.0;
  double f_max = 8.0;
  std::size_t size = 32;
  std::size_t channels = 3;
};

struct Battery {
  BatteryConfig config;
  std::vector<double> orientations, frequencies, phases;
  std::vector<Hue> hues;
  std::vector<GratingSpec> specs;  // orientation-major, then frequency, phase, hue

  std::size_t index(std::size_t o, std::size_t f, std::size_t p, std::size_t h) const {
    return ((o * frequencies.size() + f) * phases.size() + p) * hues.size() + h;
  }
};

inline Battery grating_battery(const BatteryConfig& cfg) {
  if (cfg.n_orient < 1 || cfg.n_freq < 1 || cfg.n_phase < 1 || cfg.n_hue < 1)
    throw ConfigError("battery counts must be >= 1");
  if (cfg.n_hue > 2) throw ConfigError("battery supports at most 2 hues (achromatic, red-green)");
  if (cfg.n_hue == 2 && cfg.channels != 3) throw ConfigError("a red-green battery needs 3 channels");
  if (!(cfg.f_min > 0.0) || cfg.f_max < cfg.f_min) throw ConfigError("battery needs 0 < f_min <= f_max");
  Battery b;
  b.config = cfg;
  for (std::size_t i = 0; i < cfg.n_orient; ++i)
    b.orientations.push_back(std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg.n_orient));
  for (std::size_t i = 0; i < cfg.n_freq; ++i) {
    const double frac = cfg.n_freq == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(cfg.n_freq - 1);
    b.frequencies.push_back(cfg.f_min * std::pow(cfg.f_max / cfg.f_min, frac));
  }
  for (std::size_t i = 0; i < cfg.n_phase; ++i)
    b.phases.push_back(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(cfg.n_phase));
  b.hues.push_back(Hue::Achromatic);
  if (cfg.n_hue == 2) b.hues.push_back(Hue::RedGreen);
  for (double o : b.orientations)
    for (double f : b.frequencies)
      for (double p : b.phases)
        for (Hue h : b.hues) b.specs.push_back({o, f, p, h, cfg.size, cfg.channels});
  return b;
}

// --- Category proxies --------------------------------------------------------

enum class Category { Faces, Places, Characters, Bodies, Objects };

inline constexpr Category kAllCategories[] = {Category::Faces, Category::Places, Category::Characters,
                                              Category::Bodies, Category::Objects};

inline std::string to_string(Category c) {
  switch (c) {
    case Category::Faces: return "faces";
    case Category::Places: return "places";
    case Category::Characters: return "characters";
    case Category::Bodies: return "bodies";
    case Category::Objects: return "objects";
  }
  return "?";
}

struct CategoryStimulusSet {
  Category category;
  std::uint64_t seed = 0;
  std::vector<Image> exemplars;
};

namespace stimuli_detail {

// Paints a soft-edged segment of half-width `hw` from (x0, y0) to (x1, y1).
inline void stroke(Image& im, double x0, double y0, double x1, double y1, double hw, double value) {
  const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
  for (std::size_t y = 0; y < im.height; ++y)
    for (std::size_t x = 0; x < im.width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - (x0 + t * dx), ey = py - (y0 + t * dy);
      const double d = std::sqrt(ex * ex + ey * ey);
      const double w = std::clamp(hw + 0.5 - d, 0.0, 1.0);
      if (w > 0)
        for (std::size_t c = 0; c < im.channels; ++c) im.at(c, y, x) = (1 - w) * im.at(c, y, x) + w * value;
    }
}

inline void ellipse(Image& im, double cx, double cy, double rx, double ry, double value) {
  for (std::size_t y = 0; y < im.height; ++y)
    for (std::size_t x = 0; x < im.width; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - cx) / rx, v = (static_cast<double>(y) + 0.5 - cy) / ry;
      const double r = std::sqrt(u * u + v * v);
      const double w = std::clamp((1.0 - r) * std::min(rx, ry) + 0.5, 0.0, 1.0);
      if (w > 0)
        for (std::size_t c = 0; c < im.channels; ++c) im.at(c, y, x) = (1 - w) * im.at(c, y, x) + w * value;
    }
}

inline double jitter(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Bright oval with two dark eyes and a mouth bar.
inline Image face(Rng& rng, std::size_t ch, std::size_t n) {
  const double s = static_cast<double>(n);
  Image im = blank_image(ch, n, jitter(rng, 0.05, 0.2));
  const double cx = s * jitter(rng, 0.42, 0.58), cy = s * jitter(rng, 0.42, 0.58);
  const double rx = s * jitter(rng, 0.26, 0.34), ry = rx * jitter(rng, 1.1, 1.3);
  ellipse(im, cx, cy, rx, ry, jitter(rng, 0.75, 0.95));
  const double eye = rx * 0.18, ex = rx * 0.42, ey = ry * 0.25;
  ellipse(im, cx - ex, cy - ey, eye, eye, 0.1);
  ellipse(im, cx + ex, cy - ey, eye, eye, 0.1);
  stroke(im, cx - rx * 0.35, cy + ry * 0.45, cx + rx * 0.35, cy + ry * 0.45, s * 0.03, 0.15);
  return im;
}

// Horizon plus vertical building edges: a rectilinear layout.
inline Image place(Rng& rng, std::size_t ch, std::size_t n) {
  const double s = static_cast<double>(n);
  Image im = blank_image(ch, n, jitter(rng, 0.55, 0.7));
  const double horizon = s * jitter(rng, 0.45, 0.65);
  for (std::size_t y = 0; y < n; ++y)
    if (static_cast<double>(y) > horizon)
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t c = 0; c < ch; ++c) im.at(c, y, x) = 0.3;
  const int buildings = 2 + static_cast<int>(rng() % 3);
  for (int b = 0; b < buildings; ++b) {
    const double x0 = s * jitter(rng, 0.05, 0.8), wdt = s * jitter(rng, 0.1, 0.2);
    const double top = horizon - s * jitter(rng, 0.15, 0.4);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        if (px >= x0 && px < x0 + wdt && py >= top && py <= horizon)
          for (std::size_t c = 0; c < ch; ++c) im.at(c, y, x) = 0.9;
      }
  }
  return im;
}

// Thin dark strokes on a light page, glyph-like.
inline Image glyphs(Rng& rng, std::size_t ch, std::size_t n) {
  const double s = static_cast<double>(n);
  Image im = blank_image(ch, n, jitter(rng, 0.85, 0.95));
  const int count = 2 + static_cast<int>(rng() % 2);
  for (int g = 0; g < count; ++g) {
    const double cx = s * (0.2 + 0.6 * (g + 0.5) / count), cy = s * jitter(rng, 0.35, 0.65);
    const int strokes = 2 + static_cast<int>(rng() % 2);
    for (int k = 0; k < strokes; ++k) {
      const double a = jitter(rng, 0.0, std::numbers::pi), len = s * jitter(rng, 0.08, 0.14);
      stroke(im, cx - len * std::cos(a), cy - len * std::sin(a), cx + len * std::cos(a),
             cy + len * std::sin(a), s * 0.02, 0.05);
    }
  }
  return im;
}

// A torso with elongated limbs.
inline Image body(Rng& rng, std::size_t ch, std::size_t n) {
  const double s = static_cast<double>(n);
  Image im = blank_image(ch, n, jitter(rng, 0.1, 0.25));
  const double cx = s * jitter(rng, 0.42, 0.58), top = s * jitter(rng, 0.18, 0.25), hip = s * jitter(rng, 0.55, 0.62);
  const double v = jitter(rng, 0.7, 0.9), hw = s * 0.045;
  stroke(im, cx, top, cx, hip, hw * 1.6, v);
  ellipse(im, cx, top - s * 0.06, s * 0.06, s * 0.06, v);
  for (int side : {-1, 1}) {
    const double arm = jitter(rng, 0.3, 1.2), leg = jitter(rng, 0.15, 0.45);
    stroke(im, cx, top + s * 0.05, cx + side * s * 0.3 * std::cos(arm), top + s * 0.05 + s * 0.3 * std::sin(arm), hw, v);
    stroke(im, cx, hip, cx + side * s * 0.3 * std::sin(leg), hip + s * 0.33 * std::cos(leg), hw, v);
  }
  return im;
}

// Irregular smooth blob from a few Gaussian bumps.
inline Image object(Rng& rng, std::size_t ch, std::size_t n) {
  const double s = static_cast<double>(n);
  Image im = blank_image(ch, n, 0.0);
  const double bg = jitter(rng, 0.35, 0.5);
  const double cx = s * jitter(rng, 0.4, 0.6), cy = s * jitter(rng, 0.4, 0.6);
  struct Bump {
    double x, y, r;
  };
  std::vector<Bump> bumps;
  for (int k = 0; k < 4; ++k)
    bumps.push_back({cx + s * jitter(rng, -0.12, 0.12), cy + s * jitter(rng, -0.12, 0.12), s * jitter(rng, 0.08, 0.14)});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double f = 0;
      for (const auto& b : bumps) {
        const double dx = static_cast<double>(x) + 0.5 - b.x, dy = static_cast<double>(y) + 0.5 - b.y;
        f += std::exp(-(dx * dx + dy * dy) / (2 * b.r * b.r));
      }
      const double w = std::clamp(f, 0.0, 1.0);
      for (std::size_t c = 0; c < ch; ++c) im.at(c, y, x) = bg + (0.0 - bg) * w;
    }
  return im;
}

}  // namespace stimuli_detail

inline Image make_category_exemplar(Category c, Rng& rng, std::size_t channels, std::size_t size) {
  using namespace stimuli_detail;
  switch (c) {
    case Category::Faces: return face(rng, channels, size);
    case Category::Places: return place(rng, channels, size);
    case Category::Characters: return glyphs(rng, channels, size);
    case Category::Bodies: return body(rng, channels, size);
    case Category::Objects: return object(rng, channels, size);
  }
  throw ContractViolation("unknown category");
}

inline std::vector<CategoryStimulusSet> make_category_sets(std::uint64_t seed, std::size_t per_category = 32,
                                                           std::size_t channels = 3, std::size_t size = 32) {
  std::vector<CategoryStimulusSet> sets;
  for (std::size_t k = 0; k < std::size(kAllCategories); ++k) {
    CategoryStimulusSet set{kAllCategories[k], derive_seed(seed, "category", k), {}};
    Rng rng(set.seed);
    for (std::size_t e = 0; e < per_category; ++e)
      set.exemplars.push_back(make_category_exemplar(set.category, rng, channels, size));
    sets.push_back(std::move(set));
  }
  return sets;
}

// --- Portable pixel maps --------------------------------------------------------

// Writes P5 (1 channel) or P6 (3 channels) with maxval 255.
inline void write_pnm(const std::string& path, const Image& im) {
  if (im.channels != 1 && im.channels != 3) throw ContractViolation("write_pnm: need 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  os << (im.channels == 1 ? "P5" : "P6") << "\n" << im.width << " " << im.height << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(im.pixels.size());
  for (std::size_t y = 0; y < im.height; ++y)
    for (std::size_t x = 0; x < im.width; ++x)
      for (std::size_t c = 0; c < im.channels; ++c)
        bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(im.at(c, y, x), 0.0, 1.0) * 255.0)));
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Image read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open image " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6") throw IngestError(path + ": not a binary PGM/PPM (magic '" + magic + "')");
  auto next_int = [&](const char* what) {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string comment;
      std::getline(is, comment);
      is >> std::ws;
    }
    long v = -1;
    if (!(is >> v) || v <= 0) throw IngestError(path + ": bad " + std::string(what) + " in header");
    return static_cast<std::size_t>(v);
  };
  const std::size_t w = next_int("width"), h = next_int("height"), maxval = next_int("maxval");
  if (maxval > 255) throw IngestError(path + ": only 8-bit images are supported");
  is.get();
  Image im{magic == "P5" ? 1u : 3u, h, w, {}};
  im.pixels.assign(im.channels * h * w, 0.0);
  std::vector<unsigned char> bytes(im.pixels.size());
  const auto header_end = is.tellg();
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size())
    throw IngestError(path + ": pixel data truncated at byte offset " +
                      std::to_string(static_cast<long long>(header_end) + is.gcount()));
  std::size_t k = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < im.channels; ++c) im.at(c, y, x) = bytes[k++] / static_cast<double>(maxval);
  return im;
}

}  // namespace topo
