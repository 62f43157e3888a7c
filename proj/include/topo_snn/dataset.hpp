#pragma once

// Small image-classification datasets: IDX, CSV pixel rows, and per-class
// image directories, plus an in-memory synthetic set built from the category
// proxies. Byte layouts are described in docs/formats.md.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "topo_snn/error.hpp"
#include "topo_snn/rng.hpp"
#include "topo_snn/stimuli.hpp"
#include "topo_snn/tensor.hpp"

namespace topo {

enum class DatasetFormat { Idx, CsvPixels, ImageDirectory, Synthetic };

inline DatasetFormat dataset_format_from(const std::string& s) {
  if (s == "idx") return DatasetFormat::Idx;
  if (s == "csv") return DatasetFormat::CsvPixels;
  if (s == "image-dir") return DatasetFormat::ImageDirectory;
  if (s == "synthetic") return DatasetFormat::Synthetic;
  throw ConfigError("unknown dataset format '" + s + "' (idx, csv, image-dir, synthetic)");
}

struct DatasetOptions {
  double train_ratio = 0.8;
  std::uint64_t split_seed = 0;
  std::size_t num_classes = 0;  // 0 = max label + 1
  // CSV rows carry no shape; these describe it (height 0 = square from the row length).
  std::size_t channels = 1;
  std::size_t height = 0;
  double csv_scale = 1.0;  // pixel = value / csv_scale
};

struct DatasetHandle {
  std::string source;
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t num_classes = 0;
  std::vector<double> pixels;  // (N, C, H, W)
  std::vector<int> labels;
  std::vector<std::size_t> train, val;  // disjoint index sets
  std::vector<double> mean, stddev;     // per channel, train split only

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }

  Image image(std::size_t i) const {
    Image im{channels, height, width, {}};
    im.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(i * image_size()),
                     pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * image_size()));
    return im;
  }

  // (B, C, H, W) batch and its labels for the given example indices.
  std::pair<Tensor, std::vector<int>> batch(const std::vector<std::size_t>& idx) const {
    TOPO_REQUIRE(!idx.empty(), "batch: no indices");
    std::vector<double> data;
    data.reserve(idx.size() * image_size());
    std::vector<int> y;
    for (auto i : idx) {
      TOPO_REQUIRE(i < size(), "batch: index out of range");
      data.insert(data.end(), pixels.begin() + static_cast<std::ptrdiff_t>(i * image_size()),
                  pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * image_size()));
      y.push_back(labels[i]);
    }
    return {Tensor({idx.size(), channels, height, width}, std::move(data)), std::move(y)};
  }
};

// Validates labels, draws the seeded split and computes train-only
// normalisation statistics.
inline void finalize_dataset(DatasetHandle& d, const DatasetOptions& opt) {
  if (d.labels.empty()) throw IngestError(d.source + ": dataset is empty");
  if (d.pixels.size() != d.labels.size() * d.image_size())
    throw IngestError(d.source + ": pixel count does not match label count");
  if (!(opt.train_ratio > 0.0 && opt.train_ratio <= 1.0)) throw ConfigError("train_ratio must be in (0, 1]");
  const int max_label = *std::max_element(d.labels.begin(), d.labels.end());
  d.num_classes = opt.num_classes ? opt.num_classes : static_cast<std::size_t>(std::max(max_label, 0)) + 1;
  for (std::size_t i = 0; i < d.labels.size(); ++i)
    if (d.labels[i] < 0 || static_cast<std::size_t>(d.labels[i]) >= d.num_classes)
      throw IngestError(d.source + ": label " + std::to_string(d.labels[i]) + " of example " + std::to_string(i) +
                        " is outside [0, " + std::to_string(d.num_classes) + ")");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(opt.split_seed, "dataset-split"));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(opt.train_ratio * static_cast<double>(d.size())));
  d.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.val.begin(), d.val.end());
  if (d.train.empty()) throw ConfigError(d.source + ": train split is empty");

  const std::size_t plane = d.height * d.width;
  d.mean.assign(d.channels, 0.0);
  d.stddev.assign(d.channels, 0.0);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double s = 0, ss = 0;
    for (auto i : d.train)
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = d.pixels[i * d.image_size() + c * plane + k];
        s += v;
        ss += v * v;
      }
    const double n = static_cast<double>(d.train.size() * plane);
    d.mean[c] = s / n;
    d.stddev[c] = std::sqrt(std::max(ss / n - d.mean[c] * d.mean[c], 0.0));
    if (d.stddev[c] < 1e-6) d.stddev[c] = 1.0;
  }
}

// --- IDX ------------------------------------------------------------------------
// Magic: two zero bytes, a type code (0x08 ubyte, 0x0C int32, 0x0D float32,
// 0x0E float64) and the dimension count; then big-endian uint32 dimensions and
// big-endian data. Images are (N, H, W) or (N, C, H, W); ubyte pixels are
// divided by 255. Labels are a 1-D ubyte or int32 array.

enum class IdxType : std::uint8_t { UByte = 0x08, Int32 = 0x0C, Float32 = 0x0D, Float64 = 0x0E };

struct IdxArray {
  IdxType type = IdxType::UByte;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

namespace idx_detail {

inline std::size_t width_of(IdxType t) {
  switch (t) {
    case IdxType::UByte: return 1;
    case IdxType::Int32: return 4;
    case IdxType::Float32: return 4;
    case IdxType::Float64: return 8;
  }
  return 0;
}

inline std::uint64_t read_be(const unsigned char* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
  return v;
}

inline void write_be(std::ostream& os, std::uint64_t v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) os.put(static_cast<char>((v >> (8 * (n - 1 - i))) & 0xff));
}

}  // namespace idx_detail

inline IdxArray read_idx(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open IDX file " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 4) throw IngestError(path + ": truncated IDX header at byte offset " + std::to_string(buf.size()));
  if (buf[0] != 0 || buf[1] != 0) throw IngestError(path + ": bad IDX magic at byte offset 0");
  IdxArray a;
  const auto code = buf[2];
  if (code != 0x08 && code != 0x0C && code != 0x0D && code != 0x0E)
    throw IngestError(path + ": unsupported IDX type code at byte offset 2");
  a.type = static_cast<IdxType>(code);
  const std::size_t rank = buf[3];
  if (rank == 0) throw IngestError(path + ": IDX rank 0 at byte offset 3");
  std::size_t off = 4;
  if (buf.size() < off + 4 * rank) throw IngestError(path + ": truncated IDX dimensions at byte offset " + std::to_string(buf.size()));
  std::size_t count = 1;
  for (std::size_t r = 0; r < rank; ++r, off += 4) {
    a.dims.push_back(static_cast<std::size_t>(idx_detail::read_be(&buf[off], 4)));
    count *= a.dims.back();
  }
  const std::size_t w = idx_detail::width_of(a.type);
  if (buf.size() != off + count * w)
    throw IngestError(path + ": expected " + std::to_string(off + count * w) + " bytes, file has " +
                      std::to_string(buf.size()) + " (data ends at byte offset " + std::to_string(buf.size()) + ")");
  a.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, off += w) {
    const auto raw = idx_detail::read_be(&buf[off], w);
    switch (a.type) {
      case IdxType::UByte: a.values[i] = static_cast<double>(raw); break;
      case IdxType::Int32: a.values[i] = static_cast<double>(static_cast<std::int32_t>(raw)); break;
      case IdxType::Float32: {
        float f;
        const auto u = static_cast<std::uint32_t>(raw);
        std::memcpy(&f, &u, 4);
        a.values[i] = f;
        break;
      }
      case IdxType::Float64: {
        double d;
        std::memcpy(&d, &raw, 8);
        a.values[i] = d;
        break;
      }
    }
  }
  return a;
}

inline void write_idx(const std::string& path, const IdxArray& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write IDX file " + path);
  os.put(0);
  os.put(0);
  os.put(static_cast<char>(a.type));
  os.put(static_cast<char>(a.dims.size()));
  for (auto d : a.dims) idx_detail::write_be(os, d, 4);
  for (double v : a.values) {
    switch (a.type) {
      case IdxType::UByte: os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v)))); break;
      case IdxType::Int32: idx_detail::write_be(os, static_cast<std::uint32_t>(static_cast<std::int32_t>(v)), 4); break;
      case IdxType::Float32: {
        const float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        idx_detail::write_be(os, u, 4);
        break;
      }
      case IdxType::Float64: {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        idx_detail::write_be(os, u, 8);
        break;
      }
    }
  }
}

// Writes <dir>/images.idx and <dir>/labels.idx.
inline void save_idx_dataset(const std::string& dir, const DatasetHandle& d, IdxType pixel_type = IdxType::Float64) {
  std::filesystem::create_directories(dir);
  IdxArray im{pixel_type, {d.size(), d.channels, d.height, d.width}, d.pixels};
  if (pixel_type == IdxType::UByte)
    for (auto& v : im.values) v = std::clamp(v, 0.0, 1.0) * 255.0;
  write_idx(dir + "/images.idx", im);
  IdxArray lb{IdxType::Int32, {d.size()}, {}};
  for (int y : d.labels) lb.values.push_back(y);
  write_idx(dir + "/labels.idx", lb);
}

inline DatasetHandle load_idx_dataset(const std::string& dir, const DatasetOptions& opt) {
  if (!std::filesystem::is_directory(dir)) throw IngestError("IDX dataset directory " + dir + " does not exist");
  auto im = read_idx(dir + "/images.idx");
  auto lb = read_idx(dir + "/labels.idx");
  DatasetHandle d;
  d.source = dir;
  if (im.dims.size() == 3) {
    d.channels = 1;
    d.height = im.dims[1];
    d.width = im.dims[2];
  } else if (im.dims.size() == 4) {
    d.channels = im.dims[1];
    d.height = im.dims[2];
    d.width = im.dims[3];
  } else {
    throw IngestError(dir + "/images.idx: expected rank 3 or 4, got " + std::to_string(im.dims.size()));
  }
  if (lb.dims.size() != 1 || lb.dims[0] != im.dims[0])
    throw IngestError(dir + "/labels.idx: label count does not match " + std::to_string(im.dims[0]) + " images");
  if (im.type == IdxType::UByte)
    for (auto& v : im.values) v /= 255.0;
  d.pixels = std::move(im.values);
  for (double v : lb.values) d.labels.push_back(static_cast<int>(v));
  finalize_dataset(d, opt);
  return d;
}

// --- CSV ---------------------------------------------------------------------------
// One example per line: label, then C*H*W pixel values in (C, H, W) order. A
// first line whose first field is not a number is treated as a header.

inline DatasetHandle load_csv_dataset(const std::string& path, const DatasetOptions& opt) {
  std::ifstream is(path);
  if (!is) throw IngestError("cannot open CSV dataset " + path);
  DatasetHandle d;
  d.source = path;
  std::string line;
  std::size_t row = 0, width = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    auto num = [&](const std::string& s, double& out) {
      try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used > 0;
      } catch (...) {
        return false;
      }
    };
    double first = 0;
    if (row == 1 && !num(fields[0], first)) continue;
    if (fields.size() < 2) throw IngestError(path + ": row " + std::to_string(row) + " has no pixel values");
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw IngestError(path + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                        " fields, expected " + std::to_string(width));
    double label = 0;
    if (!num(fields[0], label) || label != std::floor(label))
      throw IngestError(path + ": row " + std::to_string(row) + " has a non-integer label");
    d.labels.push_back(static_cast<int>(label));
    for (std::size_t k = 1; k < fields.size(); ++k) {
      double v = 0;
      if (!num(fields[k], v))
        throw IngestError(path + ": row " + std::to_string(row) + " column " + std::to_string(k + 1) + " is not a number");
      d.pixels.push_back(v / opt.csv_scale);
    }
  }
  if (d.labels.empty()) throw IngestError(path + ": no data rows");
  const std::size_t n = width - 1;
  d.channels = opt.channels;
  if (d.channels == 0 || n % d.channels) throw IngestError(path + ": row length not divisible by channel count");
  const std::size_t plane = n / d.channels;
  if (opt.height) {
    if (plane % opt.height) throw IngestError(path + ": row length does not match configured height");
    d.height = opt.height;
    d.width = plane / opt.height;
  } else {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(plane))));
    if (side * side != plane) throw IngestError(path + ": rows are not square images; set the height");
    d.height = d.width = side;
  }
  finalize_dataset(d, opt);
  return d;
}

// --- Image directory ----------------------------------------------------------------
// <root>/<class name>/<file>.pgm|.ppm; classes are numbered in sorted name order.

inline DatasetHandle load_image_directory(const std::string& root, const DatasetOptions& opt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IngestError("image directory " + root + " does not exist");
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());
  DatasetHandle d;
  d.source = root;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(classes[k])) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Image im = read_pnm(f.string());
      if (d.labels.empty()) {
        d.channels = im.channels;
        d.height = im.height;
        d.width = im.width;
      } else if (im.channels != d.channels || im.height != d.height || im.width != d.width) {
        throw IngestError(f.string() + ": image shape differs from the first image");
      }
      d.pixels.insert(d.pixels.end(), im.pixels.begin(), im.pixels.end());
      d.labels.push_back(static_cast<int>(k));
    }
  }
  if (d.labels.empty()) throw IngestError(root + ": no .pgm/.ppm images found in class subdirectories");
  auto o = opt;
  if (!o.num_classes) o.num_classes = classes.size();
  finalize_dataset(d, o);
  return d;
}

// In-memory set drawn from the first `classes` category proxies.
inline DatasetHandle make_synthetic_dataset(std::size_t n, std::size_t classes, std::size_t channels,
                                            std::size_t size, std::uint64_t seed, const DatasetOptions& opt = {}) {
  if (classes < 2 || classes > std::size(kAllCategories)) throw ConfigError("synthetic dataset supports 2..5 classes");
  if (n < classes) throw ConfigError("synthetic dataset needs at least one example per class");
  DatasetHandle d;
  d.source = "synthetic";
  d.channels = channels;
  d.height = d.width = size;
  Rng rng(derive_seed(seed, "synthetic-dataset"));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = i % classes;
    Image im = make_category_exemplar(kAllCategories[k], rng, channels, size);
    d.pixels.insert(d.pixels.end(), im.pixels.begin(), im.pixels.end());
    d.labels.push_back(static_cast<int>(k));
  }
  auto o = opt;
  o.num_classes = classes;
  finalize_dataset(d, o);
  return d;
}

inline DatasetHandle load_dataset(const std::string& path, DatasetFormat format, const DatasetOptions& opt) {
  switch (format) {
    case DatasetFormat::Idx: return load_idx_dataset(path, opt);
    case DatasetFormat::CsvPixels: return load_csv_dataset(path, opt);
    case DatasetFormat::ImageDirectory: return load_image_directory(path, opt);
    case DatasetFormat::Synthetic: break;
  }
  throw ConfigError("synthetic datasets are generated, not loaded from a path");
}

}  // namespace topo
