#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "topo_snn/dataset.hpp"
#include "topo_snn/stimuli.hpp"

using namespace topo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("topo_snn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Softmax regression on raw pixels by full-batch gradient descent.
struct LinearProbe {
  std::size_t dim, classes;
  std::vector<double> w;  // classes x (dim + 1)

  LinearProbe(std::size_t d, std::size_t k) : dim(d), classes(k), w(k * (d + 1), 0.0) {}

  std::vector<double> scores(const std::vector<double>& x) const {
    std::vector<double> s(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      double z = w[k * (dim + 1) + dim];
      for (std::size_t i = 0; i < dim; ++i) z += w[k * (dim + 1) + i] * x[i];
      s[k] = z;
    }
    return s;
  }

  void fit(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys, int epochs, double lr) {
    for (int e = 0; e < epochs; ++e) {
      std::vector<double> g(w.size(), 0.0);
      for (std::size_t n = 0; n < xs.size(); ++n) {
        auto s = scores(xs[n]);
        const double m = *std::max_element(s.begin(), s.end());
        double z = 0;
        for (auto& v : s) z += (v = std::exp(v - m));
        for (std::size_t k = 0; k < classes; ++k) {
          const double d = s[k] / z - (static_cast<int>(k) == ys[n] ? 1.0 : 0.0);
          for (std::size_t i = 0; i < dim; ++i) g[k * (dim + 1) + i] += d * xs[n][i];
          g[k * (dim + 1) + dim] += d;
        }
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i] / static_cast<double>(xs.size());
    }
  }

  int predict(const std::vector<double>& x) const {
    auto s = scores(x);
    return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
  }
};

}  // namespace

TEST(Grating, ZeroOrientationGivesVerticalStripes) {
  auto im = make_grating({0.0, 2.0, 0.0, Hue::Achromatic, 16, 1});
  for (std::size_t y = 1; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) EXPECT_EQ(im.at(0, y, x), im.at(0, 0, x));
  EXPECT_NE(im.at(0, 0, 0), im.at(0, 0, 2));
}

TEST(Grating, PhasePeriodicity) {
  auto a = make_grating({0.7, 3.0, 0.4, Hue::Achromatic, 16, 1});
  auto b = make_grating({0.7, 3.0, 0.4 + 2 * std::numbers::pi, Hue::Achromatic, 16, 1});
  for (std::size_t i = 0; i < a.pixels.size(); ++i) EXPECT_NEAR(a.pixels[i], b.pixels[i], 1e-12);
}

TEST(Grating, MatchesPerPixelFormula) {
  const double th = std::numbers::pi / 4;
  auto im = make_grating({th, 2.0, 0.0, Hue::Achromatic, 32, 3});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const double want =
            0.5 + 0.5 * std::sin(2 * std::numbers::pi * 2.0 * (x * std::cos(th) + y * std::sin(th)) / 32.0);
        EXPECT_NEAR(im.at(c, y, x), want, 1e-15);
      }
}

TEST(Grating, OrientationHalfTurnReflectsPhase) {
  // theta + pi negates the spatial argument: sin(-a + phi) = sin(a + pi - phi).
  // For phase pi/2 the two gratings coincide pixelwise.
  const double th = 0.3, ph = 1.1;
  auto a = make_grating({th + std::numbers::pi, 2.5, ph, Hue::Achromatic, 16, 1});
  auto b = make_grating({th, 2.5, std::numbers::pi - ph, Hue::Achromatic, 16, 1});
  for (std::size_t i = 0; i < a.pixels.size(); ++i) EXPECT_NEAR(a.pixels[i], b.pixels[i], 1e-12);
  auto c = make_grating({th + std::numbers::pi, 2.5, std::numbers::pi / 2, Hue::Achromatic, 16, 1});
  auto d = make_grating({th, 2.5, std::numbers::pi / 2, Hue::Achromatic, 16, 1});
  for (std::size_t i = 0; i < c.pixels.size(); ++i) EXPECT_NEAR(c.pixels[i], d.pixels[i], 1e-12);
}

TEST(Grating, HueAndRange) {
  auto im = make_grating({1.0, 4.0, 0.3, Hue::RedGreen, 8, 3});
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      EXPECT_NEAR(im.at(0, y, x) + im.at(1, y, x), 1.0, 1e-15);
      EXPECT_EQ(im.at(2, y, x), 0.5);
    }
  for (double v : im.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(make_grating({0, 0.0, 0, Hue::Achromatic, 8, 1}), ConfigError);
  EXPECT_THROW(make_grating({0, 1.0, 0, Hue::RedGreen, 8, 1}), ConfigError);
}

TEST(Battery, SingleSpec) {
  BatteryConfig cfg{1, 1, 1, 1};
  EXPECT_EQ(grating_battery(cfg).specs.size(), 1u);
}

TEST(Battery, OrientationSpacing) {
  BatteryConfig cfg{8, 1, 1, 1};
  auto b = grating_battery(cfg);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(b.orientations[i], i * std::numbers::pi / 8);
}

TEST(Battery, FullGridIsUnique) {
  BatteryConfig cfg{8, 4, 4, 2};
  auto b = grating_battery(cfg);
  ASSERT_EQ(b.specs.size(), 256u);
  std::set<std::tuple<double, double, double, int>> seen;
  for (const auto& s : b.specs) seen.insert({s.theta, s.freq, s.phase, static_cast<int>(s.hue)});
  EXPECT_EQ(seen.size(), 256u);
  EXPECT_DOUBLE_EQ(b.frequencies.front(), 1.0);
  EXPECT_DOUBLE_EQ(b.frequencies.back(), 8.0);
  EXPECT_NEAR(b.frequencies[1] / b.frequencies[0], b.frequencies[2] / b.frequencies[1], 1e-12);
  const auto& s = b.specs[b.index(3, 2, 1, 1)];
  EXPECT_EQ(s.theta, b.orientations[3]);
  EXPECT_EQ(s.freq, b.frequencies[2]);
  EXPECT_EQ(s.phase, b.phases[1]);
  EXPECT_EQ(s.hue, Hue::RedGreen);
}

TEST(Categories, CountsAndDeterminism) {
  auto a = make_category_sets(4);
  auto b = make_category_sets(4);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(a[k].exemplars.size(), 32u);
    EXPECT_EQ(a[k].exemplars, b[k].exemplars);
    for (const auto& im : a[k].exemplars)
      for (double v : im.pixels) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
  }
  EXPECT_NE(make_category_sets(5)[0].exemplars, a[0].exemplars);
}

TEST(Categories, LinearProbeSeparatesHeldOutExemplars) {
  auto to_xy = [](const std::vector<CategoryStimulusSet>& sets) {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (std::size_t k = 0; k < sets.size(); ++k)
      for (const auto& im : sets[k].exemplars) {
        xs.push_back(im.pixels);
        ys.push_back(static_cast<int>(k));
      }
    return std::pair{xs, ys};
  };
  auto [xtr, ytr] = to_xy(make_category_sets(1, 32, 1, 32));
  auto [xte, yte] = to_xy(make_category_sets(2, 32, 1, 32));
  LinearProbe probe(32 * 32, 5);
  probe.fit(xtr, ytr, 300, 0.05);
  int correct = 0;
  for (std::size_t n = 0; n < xte.size(); ++n) correct += probe.predict(xte[n]) == yte[n];
  EXPECT_GT(correct / static_cast<double>(xte.size()), 0.9);
}

TEST(Pnm, RoundTripAtEightBits) {
  auto dir = scratch("pnm");
  auto im = make_grating({0.4, 2.0, 0.0, Hue::RedGreen, 12, 3});
  write_pnm((dir / "g.ppm").string(), im);
  auto back = read_pnm((dir / "g.ppm").string());
  ASSERT_EQ(back.channels, 3u);
  for (std::size_t i = 0; i < im.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], im.pixels[i], 0.5 / 255 + 1e-12);
  std::ofstream((dir / "bad.pgm").string(), std::ios::binary) << "P5\n4 4\n255\n\x01\x02";
  EXPECT_THROW(read_pnm((dir / "bad.pgm").string()), IngestError);
}

TEST(Dataset, IdxRoundTripIsExact) {
  auto dir = scratch("idx");
  auto d = make_synthetic_dataset(20, 4, 2, 8, 3);
  save_idx_dataset(dir.string(), d);
  auto back = load_idx_dataset(dir.string(), {});
  EXPECT_EQ(back.pixels, d.pixels);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.channels, 2u);
  EXPECT_EQ(back.train, d.train);
}

TEST(Dataset, IdxUByteAndCorruption) {
  auto dir = scratch("idx8");
  auto d = make_synthetic_dataset(10, 2, 1, 4, 3);
  save_idx_dataset(dir.string(), d, IdxType::UByte);
  auto back = load_idx_dataset(dir.string(), {});
  for (std::size_t i = 0; i < d.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], d.pixels[i], 0.5 / 255 + 1e-12);
  fs::resize_file(dir / "images.idx", fs::file_size(dir / "images.idx") - 3);
  try {
    load_idx_dataset(dir.string(), {});
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(Dataset, CsvRowsAndErrors) {
  auto dir = scratch("csv");
  {
    std::ofstream os(dir / "ok.csv");
    os << "label,p0,p1,p2,p3\n";
    for (int i = 0; i < 10; ++i) os << (i % 2) << "," << i << ",0,255,128\n";
  }
  DatasetOptions opt;
  opt.csv_scale = 255.0;
  auto d = load_csv_dataset((dir / "ok.csv").string(), opt);
  EXPECT_EQ(d.size(), 10u);
  EXPECT_EQ(d.height, 2u);
  EXPECT_EQ(d.train.size(), 8u);
  EXPECT_EQ(d.val.size(), 2u);
  EXPECT_DOUBLE_EQ(d.pixels[2], 1.0);

  { std::ofstream(dir / "short.csv") << "0,1,2,3,4\n1,1,2\n"; }
  try {
    load_csv_dataset((dir / "short.csv").string(), {});
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  { std::ofstream(dir / "label.csv") << "0,1,2,3,4\n7,1,2,3,4\n"; }
  DatasetOptions two;
  two.num_classes = 2;
  EXPECT_THROW(load_csv_dataset((dir / "label.csv").string(), two), IngestError);
}

TEST(Dataset, ImageDirectorySplit) {
  auto dir = scratch("imgdir");
  EXPECT_THROW(load_image_directory(dir.string(), {}), IngestError);
  for (int k = 0; k < 2; ++k) {
    fs::create_directories(dir / ("class" + std::to_string(k)));
    for (int i = 0; i < 5; ++i)
      write_pnm((dir / ("class" + std::to_string(k)) / ("im" + std::to_string(i) + ".pgm")).string(),
                make_grating({0.5 * i, 1.0 + k, 0.0, Hue::Achromatic, 6, 1}));
  }
  auto d = load_image_directory(dir.string(), {});
  EXPECT_EQ(d.size(), 10u);
  EXPECT_EQ(d.num_classes, 2u);
  EXPECT_EQ(d.train.size(), 8u);
  EXPECT_EQ(d.val.size(), 2u);
  std::set<std::size_t> all(d.train.begin(), d.train.end());
  for (auto v : d.val) EXPECT_FALSE(all.count(v));
}

TEST(Dataset, NormalisationUsesTrainSplitOnly) {
  auto d = make_synthetic_dataset(30, 3, 1, 6, 9);
  double s = 0, n = 0;
  for (auto i : d.train)
    for (std::size_t k = 0; k < 36; ++k, ++n) s += d.pixels[i * 36 + k];
  EXPECT_NEAR(d.mean[0], s / n, 1e-12);
  auto [x, y] = d.batch({0, 1, 2});
  EXPECT_EQ(x.shape(), (Shape{3, 1, 6, 6}));
  EXPECT_EQ(y, (std::vector<int>{0, 1, 2}));
}
