#pragma once

// Report artifacts: CSV tables, SVG scatter plots and PPM rasters of maps on
// the cortical sheet, and the JSON manifest of scalar metrics. Numbers are
// printed in their shortest round-trip form, so identical runs give
// identical bytes.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "topo_snn/error.hpp"
#include "topo_snn/sheet.hpp"

namespace topo {

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : os_(path) {
    if (!os_) throw ConfigError("cannot write " + path.string());
    row_strings(header);
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> v{cell(cells)...};
    row_strings(v);
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

  void flush() { os_.flush(); }

  static std::string cell(double v) { return format_real(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class T>
    requires std::is_integral_v<T>
  static std::string cell(T v) {
    return std::to_string(v);
  }

 private:
  std::ofstream os_;
};

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

// h in [0, 1) around the colour wheel at full saturation and value.
inline Rgb hue_color(double h) {
  h = h - std::floor(h);
  const double x = h * 6.0;
  const int sector = static_cast<int>(x) % 6;
  const double f = x - std::floor(x);
  auto c = [](double v) { return static_cast<unsigned char>(std::lround(255.0 * v)); };
  switch (sector) {
    case 0: return {255, c(f), 0};
    case 1: return {c(1 - f), 255, 0};
    case 2: return {0, 255, c(f)};
    case 3: return {0, c(1 - f), 255};
    case 4: return {c(f), 0, 255};
    default: return {255, 0, c(1 - f)};
  }
}

inline constexpr Rgb kUndefinedColor{128, 128, 128};

// Per-unit colours for a preference vector: values are mapped linearly from
// [lo, hi] onto the colour wheel (5/6 of a turn, or a full turn when
// `circular`, as for orientation over [0, pi)).
inline std::vector<Rgb> preference_colors(const std::vector<double>& values, const std::vector<char>& defined,
                                          double lo, double hi, bool circular) {
  std::vector<Rgb> out(values.size(), kUndefinedColor);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t u = 0; u < values.size(); ++u) {
    if (!defined[u]) continue;
    const double f = std::clamp((values[u] - lo) / span, 0.0, 1.0);
    out[u] = hue_color(circular ? f : f * 5.0 / 6.0);
  }
  return out;
}

inline std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

// Scatter of units on the sheet, x/y axes in mm.
inline void write_sheet_svg(const std::filesystem::path& path, const CorticalSheet& sheet,
                            const std::vector<Rgb>& colors, const std::string& title) {
  TOPO_REQUIRE(colors.size() == sheet.size(), "write_sheet_svg: one colour per unit");
  const double px = 480.0, margin = 40.0;
  const double scale = px / std::max(sheet.height_mm(), sheet.width_mm());
  const double w = sheet.width_mm() * scale, h = sheet.height_mm() * scale;
  const double radius = std::max(0.6, 0.35 * scale * std::sqrt(sheet.height_mm() * sheet.width_mm() /
                                                              static_cast<double>(sheet.size())));
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_real(w + 2 * margin) << "\" height=\""
     << format_real(h + 2 * margin) << "\">\n";
  os << "<text x=\"" << margin << "\" y=\"20\" font-size=\"14\" font-family=\"sans-serif\">" << title << "</text>\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << format_real(w) << "\" height=\""
     << format_real(h) << "\" fill=\"black\"/>\n";
  // The sheet's x coordinate runs down the rows of the retinotopic grid.
  for (std::size_t u = 0; u < sheet.size(); ++u) {
    const auto p = sheet.at(u);
    os << "<circle cx=\"" << format_real(margin + p.y * scale) << "\" cy=\"" << format_real(margin + p.x * scale)
       << "\" r=\"" << format_real(radius) << "\" fill=\"" << hex(colors[u]) << "\"/>\n";
  }
  os << "<text x=\"" << format_real(margin + w / 2) << "\" y=\"" << format_real(h + 2 * margin - 8)
     << "\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\">y (mm), 0 to "
     << format_real(sheet.width_mm()) << "</text>\n";
  os << "<text x=\"12\" y=\"" << format_real(margin + h / 2) << "\" font-size=\"12\" font-family=\"sans-serif\" "
     << "transform=\"rotate(-90 12 " << format_real(margin + h / 2) << ")\" text-anchor=\"middle\">x (mm), 0 to "
     << format_real(sheet.height_mm()) << "</text>\n";
  os << "</svg>\n";
}

// Binary PPM raster of the same scatter: each unit paints the pixel it falls in.
inline void write_sheet_ppm(const std::filesystem::path& path, const CorticalSheet& sheet,
                            const std::vector<Rgb>& colors, std::size_t long_side = 256) {
  TOPO_REQUIRE(colors.size() == sheet.size(), "write_sheet_ppm: one colour per unit");
  const double scale = static_cast<double>(long_side) / std::max(sheet.height_mm(), sheet.width_mm());
  const auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(sheet.height_mm() * scale)));
  const auto cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(sheet.width_mm() * scale)));
  std::vector<Rgb> img(rows * cols);
  for (std::size_t u = 0; u < sheet.size(); ++u) {
    const auto p = sheet.at(u);
    const auto r = std::min(rows - 1, static_cast<std::size_t>(std::max(0.0, p.x * scale)));
    const auto c = std::min(cols - 1, static_cast<std::size_t>(std::max(0.0, p.y * scale)));
    img[r * cols + c] = colors[u];
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "P6\n" << cols << " " << rows << "\n255\n";
  for (const auto& px : img) os.put(static_cast<char>(px.r)).put(static_cast<char>(px.g)).put(static_cast<char>(px.b));
}

// Keys are kept sorted, so equal content always serialises identically.
inline void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << manifest.dump(2) << '\n';
}

}  // namespace topo
