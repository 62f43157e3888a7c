#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "support/gradcheck.hpp"
#include "support/stc_oracle.hpp"
#include "topo_snn/ops.hpp"
#include "topo_snn/stc.hpp"

using namespace topo;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

SpikeTensor to_spike_tensor(const std::vector<oracle::Train>& units) {
  SpikeTensor s(0, units.size(), units[0].size(), units[0][0].size());
  for (std::size_t u = 0; u < units.size(); ++u)
    for (std::size_t b = 0; b < s.trials; ++b)
      for (std::size_t t = 0; t < s.steps; ++t) s.at(u, b, t) = units[u][b][t];
  return s;
}

CorticalSheet sheet_from(const std::vector<oracle::Loc>& loc, double size = 10.0) {
  std::vector<Point> pts;
  for (auto l : loc) pts.push_back({l.x, l.y});
  return CorticalSheet(0, size, size, loc.size(), 1, 1, pts);
}

NeuronCluster everyone(std::size_t n) {
  NeuronCluster c;
  c.members.resize(n);
  std::iota(c.members.begin(), c.members.end(), 0);
  return c;
}

// Pinned 4-unit instance: B = 3 trials, T = 4 steps.
const std::vector<oracle::Train> kFour = {
    {{1, 0, 1, 0}, {1, 1, 0, 0}, {0, 0, 0, 1}},
    {{1, 0, 1, 1}, {0, 1, 0, 0}, {0, 0, 1, 1}},
    {{0, 1, 0, 0}, {1, 1, 1, 1}, {1, 0, 0, 0}},
    {{0, 0, 1, 0}, {1, 0, 1, 0}, {0, 1, 1, 1}},
};
const std::vector<oracle::Loc> kFourLoc = {{1.0, 1.0}, {1.5, 1.2}, {3.0, 0.5}, {2.2, 2.9}};

}  // namespace

TEST(Ccg, LagNormalisationTable) {
  EXPECT_EQ(lag_count(0, 4), 4.0);
  EXPECT_EQ(lag_count(-2, 4), 2.0);
  EXPECT_EQ(lag_count(2, 4), 2.0);
  EXPECT_EQ(lag_count(5, 4), 0.0);
}

TEST(Ccg, SilentUnitGivesZero) {
  std::vector<double> silent(8, 0.0), busy{1, 1, 0, 1, 1, 0, 1, 1};
  EXPECT_EQ(ccg(silent, busy, 2, 4, 1), 0.0);
  auto r = r_ccg(silent, busy, 2, 4, 1);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.degenerate);
}

TEST(Ccg, PinnedSingleTrialMatchesTripleLoop) {
  oracle::Train si{{1, 0, 1, 0}}, sj{{0, 1, 0, 1}};
  const double expected = oracle::ccg(si, sj, 1);
  // tau = 0: no coincidences; tau = +1: 2 of 3 lag pairs; tau = -1: 1 of 3.
  EXPECT_DOUBLE_EQ(expected, 1.0);
  EXPECT_LE(rel(ccg(oracle::flatten(si), oracle::flatten(sj), 1, 4, 1), expected), 1e-12);
}

TEST(Ccg, WindowMustLeaveAtLeastOneLagPair) {
  std::vector<double> s(4, 1.0);
  EXPECT_THROW(ccg(s, s, 1, 4, 4), ContractViolation);
  EXPECT_NO_THROW(ccg(s, s, 1, 4, 3));
}

TEST(Ccg, RandomInstancesMatchTripleLoop) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng() % 4, T = 1 + rng() % 7, W = rng() % T;
    auto si = oracle::random_train(rng, B, T, 0.4), sj = oracle::random_train(rng, B, T, 0.4);
    const double want = oracle::ccg(si, sj, static_cast<long>(W));
    const double got = ccg(oracle::flatten(si), oracle::flatten(sj), B, T, W);
    if (want == 0.0)
      EXPECT_EQ(got, 0.0);
    else
      EXPECT_LE(rel(got, want), 1e-12);
  }
}

TEST(Ccg, SymmetricUnderSwap) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 100; ++k) {
    auto si = oracle::random_train(rng, 3, 6, 0.5), sj = oracle::random_train(rng, 3, 6, 0.5);
    const auto a = oracle::flatten(si), b = oracle::flatten(sj);
    EXPECT_NEAR(ccg(a, b, 3, 6, 2), ccg(b, a, 3, 6, 2), 1e-14);
  }
}

TEST(RCcg, IdenticalTrainsGiveOne) {
  std::vector<double> s{1, 0, 1, 1, 0, 0, 1, 0};
  EXPECT_DOUBLE_EQ(r_ccg(s, s, 2, 4, 2).value, 1.0);
}

TEST(RCcg, NoCoincidenceWithinWindowGivesZero) {
  // i fires only at t = 1, j only at t = 6; lags up to 2 never align.
  std::vector<double> si{1, 0, 0, 0, 0, 0}, sj{0, 0, 0, 0, 0, 1};
  EXPECT_EQ(r_ccg(si, sj, 1, 6, 2).value, 0.0);
}

TEST(RCcg, RandomPairMatchesComposedOracle) {
  std::mt19937_64 rng(23);
  auto si = oracle::random_train(rng, 2, 6, 0.5), sj = oracle::random_train(rng, 2, 6, 0.5);
  const double want = oracle::r_ccg(si, sj, 2);
  EXPECT_LE(rel(r_ccg(oracle::flatten(si), oracle::flatten(sj), 2, 6, 2).value, want), 1e-12);
}

TEST(RCcg, RawRatioCanExceedOneAndIsCapped) {
  // Lagged coincidences without lagged self-coincidences: CCG = 1, ACG = 0.5 each.
  oracle::Train si{{1, 0}}, sj{{0, 1}};
  EXPECT_DOUBLE_EQ(oracle::ccg(si, sj, 1) / std::sqrt(oracle::ccg(si, si, 1) * oracle::ccg(sj, sj, 1)), 2.0);
  EXPECT_EQ(r_ccg(oracle::flatten(si), oracle::flatten(sj), 1, 2, 1).value, 1.0);
}

TEST(RCcg, AlwaysInUnitInterval) {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 10000; ++k) {
    const std::size_t B = 1 + rng() % 5, T = 1 + rng() % 8, W = rng() % T;
    const double p = 0.05 + 0.9 * topo::uniform01(rng);
    auto si = oracle::flatten(oracle::random_train(rng, B, T, p));
    auto sj = oracle::flatten(oracle::random_train(rng, B, T, p));
    const double r = r_ccg(si, sj, B, T, W).value;
    ASSERT_GE(r, 0.0);
    ASSERT_LE(r, 1.0);
  }
}

TEST(FiringRate, Examples) {
  SpikeTensor ones(0, 2, 3, 5);
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  for (double r : firing_rate_vectors(ones)) EXPECT_EQ(r, 1.0);

  SpikeTensor s(0, 1, 1, 4);
  s.at(0, 0, 0) = 1;
  s.at(0, 0, 2) = 1;
  EXPECT_EQ(firing_rate_vectors(s)[0], 0.5);

  std::mt19937_64 rng(3);
  std::vector<oracle::Train> units;
  for (int u = 0; u < 3; ++u) units.push_back(oracle::random_train(rng, 4, 5, 0.5));
  const auto rates = firing_rate_vectors(to_spike_tensor(units));
  for (int u = 0; u < 3; ++u) {
    const auto want = oracle::rates(units[u]);
    for (int b = 0; b < 4; ++b) EXPECT_DOUBLE_EQ(rates[u * 4 + b], want[b]);
  }
}

TEST(Pearson, Examples) {
  std::vector<double> a{1, 2, 3}, b{2, 4, 6}, c{3, 2, 1};
  EXPECT_DOUBLE_EQ(stats::pearson(a, b).value, 1.0);
  EXPECT_DOUBLE_EQ(stats::pearson(a, c).value, -1.0);
  std::vector<double> x{1, 0, 2, 1}, y{0, 1, 1, 2};
  // cov = 0.5 / 4 ... direct: dx = (0,-1,1,0), dy = (-1,0,0,1): sxy = 0, so r = 0.
  EXPECT_NEAR(stats::pearson(x, y).value, oracle::pearson(x, y), 1e-15);
  EXPECT_EQ(oracle::pearson(x, y), 0.0);
  std::vector<double> flat{2, 2, 2};
  auto deg = stats::pearson(flat, a);
  EXPECT_TRUE(deg.degenerate);
  EXPECT_EQ(deg.value, 0.0);
  EXPECT_THROW(stats::pearson(a, x), ContractViolation);
  EXPECT_THROW(stats::pearson(std::vector<double>{1}, std::vector<double>{1}), ContractViolation);
}

TEST(Pearson, AffineInvariance) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x(10), y(10), z(10);
    for (int i = 0; i < 10; ++i) {
      x[i] = uniform01(rng);
      y[i] = uniform01(rng);
    }
    const double a = 0.1 + 5 * uniform01(rng), off = uniform01(rng) * 10 - 5;
    for (int i = 0; i < 10; ++i) z[i] = a * x[i] + off;
    EXPECT_NEAR(stats::pearson(z, y).value, stats::pearson(x, y).value, 1e-12);
  }
}

TEST(CorrelationDistanceLoss, AlignedAndAntiAligned) {
  std::vector<double> d{0.2, 0.9, 0.5, 0.3}, r(4), r_neg(4);
  for (int i = 0; i < 4; ++i) {
    r[i] = 2.0 * d[i] - 0.4;
    r_neg[i] = -1.5 * d[i] + 0.3;
  }
  EXPECT_NEAR(correlation_distance_loss(r, d), 0.0, 1e-15);
  EXPECT_NEAR(correlation_distance_loss(r_neg, d), 1.0, 1e-15);
  bool flag = false;
  std::vector<double> same(4, 0.7);
  EXPECT_EQ(correlation_distance_loss(same, d, &flag), 0.5);
  EXPECT_TRUE(flag);
}

TEST(ClusterLoss, FourUnitPinnedMatchesHandUnrolled) {
  const auto [want_long, want_short] = oracle::cluster_losses(kFour, kFourLoc, 1);
  const auto spikes = to_spike_tensor(kFour);
  const auto sheet = sheet_from(kFourLoc);
  const auto lt = long_timescale_loss(spikes, everyone(4), sheet);
  const auto st = short_timescale_loss(spikes, everyone(4), sheet, 1);
  EXPECT_LE(rel(lt.long_term, want_long), 1e-12);
  EXPECT_LE(rel(st.short_term, want_short), 1e-12);
  EXPECT_GE(lt.long_term, 0.0);
  EXPECT_LE(lt.long_term, 1.0);
  // Frozen from the oracle.
  EXPECT_NEAR(want_long, 0.39879408184235221, 1e-15);
  EXPECT_NEAR(want_short, 0.37652713747356903, 1e-15);
}

TEST(ClusterLoss, ThreeUnitShortTermHandUnrolled) {
  const std::vector<oracle::Train> three = {
      {{1, 1, 0, 0, 1}, {0, 1, 1, 0, 0}},
      {{1, 0, 0, 1, 1}, {0, 1, 0, 0, 1}},
      {{0, 0, 1, 1, 0}, {1, 0, 0, 1, 1}},
  };
  const std::vector<oracle::Loc> loc = {{0.5, 0.5}, {0.9, 0.4}, {2.0, 2.0}};
  const auto want = oracle::cluster_losses(three, loc, 1).second;
  const auto got = short_timescale_loss(to_spike_tensor(three), everyone(3), sheet_from(loc), 1);
  EXPECT_LE(rel(got.short_term, want), 1e-12);
  EXPECT_NEAR(want, 0.27862963386816975, 1e-15);
}

TEST(ClusterLoss, SynchronousEquidistantIsDegenerate) {
  // Three identical trains at the corners of an equilateral triangle.
  oracle::Train s{{1, 0, 1, 1}, {0, 1, 1, 0}};
  const std::vector<oracle::Loc> tri = {{1.0, 1.0}, {2.0, 1.0}, {1.5, 1.0 + std::sqrt(3.0) / 2.0}};
  const auto got = short_timescale_loss(to_spike_tensor({s, s, s}), everyone(3), sheet_from(tri), 1);
  EXPECT_EQ(got.short_term, 0.5);
  EXPECT_TRUE(got.short_degenerate);
  EXPECT_EQ(got.long_term, 0.5);
}

TEST(ClusterLoss, GradientMatchesFiniteDifferences) {
  // Real-valued relaxation of the spikes.
  std::mt19937_64 rng(41);
  const std::size_t n = 5, B = 4, T = 5, W = 2;
  std::vector<double> S(n * B * T);
  for (auto& v : S) v = 0.1 + 0.8 * uniform01(rng);
  std::vector<double> d;
  std::vector<oracle::Loc> loc;
  for (std::size_t i = 0; i < n; ++i) loc.push_back({3 * uniform01(rng), 3 * uniform01(rng)});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(oracle::inv_dist(loc[i], loc[j]));

  std::vector<double> gl(S.size()), gs(S.size());
  cluster_loss(S, n, B, T, d, W, gl, gs);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < S.size(); ++i) {
    const double orig = S[i];
    S[i] = orig + eps;
    const auto up = cluster_loss(S, n, B, T, d, W);
    S[i] = orig - eps;
    const auto dn = cluster_loss(S, n, B, T, d, W);
    S[i] = orig;
    const double fd_l = (up.long_term - dn.long_term) / (2 * eps);
    const double fd_s = (up.short_term - dn.short_term) / (2 * eps);
    EXPECT_LT(topo::testing::relative_error(gl[i], fd_l, 1e-4), 1e-6) << i;
    EXPECT_LT(topo::testing::relative_error(gs[i], fd_s, 1e-4), 1e-6) << i;
  }
}

TEST(ClusterLoss, PermutingUnitsLeavesLossesUnchanged) {
  const auto spikes = to_spike_tensor(kFour);
  const auto sheet = sheet_from(kFourLoc);
  const auto base = short_timescale_loss(spikes, everyone(4), sheet, 1);
  std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<oracle::Train> units;
  std::vector<oracle::Loc> loc;
  for (auto p : perm) {
    units.push_back(kFour[p]);
    loc.push_back(kFourLoc[p]);
  }
  const auto permuted = short_timescale_loss(to_spike_tensor(units), everyone(4), sheet_from(loc), 1);
  EXPECT_NEAR(permuted.long_term, base.long_term, 1e-12);
  EXPECT_NEAR(permuted.short_term, base.short_term, 1e-12);
}

TEST(ClusterLoss, LossesStayInUnitInterval) {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 3 + rng() % 5;
    std::vector<oracle::Train> units;
    std::vector<oracle::Loc> loc;
    for (std::size_t u = 0; u < n; ++u) {
      units.push_back(oracle::random_train(rng, 4, 4, 0.5));
      loc.push_back({5 * uniform01(rng), 5 * uniform01(rng)});
    }
    const auto l = short_timescale_loss(to_spike_tensor(units), everyone(n), sheet_from(loc), 1);
    EXPECT_GE(l.long_term, 0.0);
    EXPECT_LE(l.long_term, 1.0);
    EXPECT_GE(l.short_term, 0.0);
    EXPECT_LE(l.short_term, 1.0);
  }
}

namespace {

SpikeRecord record_from(const SpikeTensor& s, bool requires_grad) {
  SpikeRecord rec;
  rec.layer_id = s.layer_id;
  for (std::size_t t = 0; t < s.steps; ++t) {
    std::vector<double> v(s.trials * s.units);
    for (std::size_t b = 0; b < s.trials; ++b)
      for (std::size_t u = 0; u < s.units; ++u) v[b * s.units + u] = s.at(u, b, t);
    rec.steps.emplace_back(Shape{s.trials, s.units, 1, 1}, v, requires_grad);
  }
  return rec;
}

}  // namespace

TEST(StcTotal, ZeroWeightsCollapseToZero) {
  STCConfig cfg;
  cfg.alpha = cfg.beta = 0.0;
  cfg.layers = {0};
  const auto spikes = to_spike_tensor(kFour);
  auto res = stc_total({record_from(spikes, false)}, {sheet_from(kFourLoc)}, cfg, {});
  EXPECT_EQ(res.loss.item(), 0.0);
}

TEST(StcTotal, PinnedClustersComposeAsMean) {
  STCConfig cfg;
  cfg.alpha = 50.0;
  cfg.beta = 50.0;
  cfg.window = 1;
  cfg.clusters_per_layer = 2;
  cfg.layers = {0};
  const auto spikes = to_spike_tensor(kFour);
  const auto sheet = sheet_from(kFourLoc);
  NeuronCluster c1{{0, 0}, 2.5, {0, 1, 2}}, c2{{0, 0}, 2.5, {0, 1, 3}};

  auto hand = [&](std::vector<std::size_t> idx) {
    std::vector<oracle::Train> u;
    std::vector<oracle::Loc> l;
    for (auto i : idx) {
      u.push_back(kFour[i]);
      l.push_back(kFourLoc[i]);
    }
    auto [ll, ls] = oracle::cluster_losses(u, l, 1);
    return 50.0 * ll + 50.0 * ls;
  };
  const double want = 0.5 * (hand({0, 1, 2}) + hand({0, 1, 3}));
  auto res = stc_total({record_from(spikes, false)}, {sheet}, cfg, {{c1, c2}});
  EXPECT_LE(rel(res.loss.item(), want), 1e-12);
}

TEST(StcTotal, BackwardMatchesFiniteDifferences) {
  STCConfig cfg;
  cfg.alpha = 2.0;
  cfg.beta = 3.0;
  cfg.window = 1;
  cfg.clusters_per_layer = 2;
  cfg.layers = {0};
  std::mt19937_64 rng(6);
  SpikeTensor s(0, 4, 3, 4);
  for (auto& v : s.data) v = 0.1 + 0.8 * uniform01(rng);
  auto rec = record_from(s, true);
  const auto sheet = sheet_from(kFourLoc);
  std::vector<std::vector<NeuronCluster>> clusters{{{{0, 0}, 2.5, {0, 1, 2}}, {{0, 0}, 2.5, {1, 2, 3}}}};
  stc_total({rec}, {sheet}, cfg, clusters).loss.backward();
  for (auto& step : rec.steps) {
    const auto g = step.grad();
    for (std::size_t i = 0; i < step.size(); ++i) {
      const double fd = topo::testing::central_difference(step, i, 1e-6, [&] {
        return stc_total({rec}, {sheet}, cfg, clusters).loss.item();
      });
      EXPECT_LT(topo::testing::relative_error(g[i], fd, 1e-4), 1e-6);
    }
  }
}

TEST(StcTotal, MissingSheetIsConfigError) {
  STCConfig cfg;
  cfg.layers = {3};
  const auto spikes = to_spike_tensor(kFour);
  EXPECT_THROW(draw_clusters({sheet_from(kFourLoc)}, cfg, 1), ConfigError);
}

TEST(ClusterLoss, TwoUnitClusterHasNoPairCorrelation) {
  // One pair only: the correlation over pairs is undefined, both terms sit at 0.5.
  std::mt19937_64 rng(5);
  const std::size_t n = 2, B = 3, T = 4;
  std::vector<double> S(n * B * T);
  for (auto& v : S) v = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  const std::vector<double> d{1.0 / (0.01 + 0.3)};
  std::vector<double> gl(S.size(), 7.0), gs(S.size(), 7.0);
  const auto got = cluster_loss(S, n, B, T, d, 1, gl, gs);
  EXPECT_EQ(got.long_term, 0.5);
  EXPECT_EQ(got.short_term, 0.5);
  EXPECT_TRUE(got.long_degenerate);
  EXPECT_TRUE(got.short_degenerate);
  for (std::size_t i = 0; i < S.size(); ++i) {
    EXPECT_EQ(gl[i], 0.0);
    EXPECT_EQ(gs[i], 0.0);
  }
}
