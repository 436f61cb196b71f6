#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "fixtures.hpp"
#include "lfp/analysis.hpp"
#include "lfp/oracle.hpp"

namespace lfp::analysis {
namespace {

using lfp::testing::random_trimap;
using lfp::testing::Rng;

TEST(ClassifyUnknown, ThresholdAndTie) {
  Trimap t(1, 4, Label::Unknown);
  t(0, 3) = Label::Foreground;
  AlphaMatte a(1, 4);
  a(0, 0) = 0.7;
  a(0, 1) = 0.5;
  a(0, 2) = 0.49;
  a(0, 3) = 0.1;
  const auto c = classify_unknown(a, t);
  EXPECT_EQ(c[0], UnknownClass::FgLike);
  EXPECT_EQ(c[1], UnknownClass::FgLike);
  EXPECT_EQ(c[2], UnknownClass::BgLike);
  EXPECT_EQ(c[3], UnknownClass::Unlabeled);
}

TEST(ClassifyUnknown, CountsMatchScan) {
  Rng r(1);
  const Trimap t = random_trimap(r, 16, 16);
  const AlphaMatte a = lfp::testing::random_alpha(r, 16, 16);
  const auto c = classify_unknown(a, t, 0.3);
  std::size_t fg = 0, bg = 0;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (t(y, x) != Label::Unknown) continue;
      (a(y, x) >= 0.3 ? fg : bg)++;
    }
  }
  EXPECT_EQ(static_cast<std::size_t>(std::count(c.begin(), c.end(), UnknownClass::FgLike)), fg);
  EXPECT_EQ(static_cast<std::size_t>(std::count(c.begin(), c.end(), UnknownClass::BgLike)), bg);
}

TEST(DistanceToKnown, UnitAndDiagonal) {
  Trimap t(3, 3, Label::Unknown);
  t(1, 1) = Label::Foreground;
  const auto d = distance_to_known(t, Label::Foreground);
  EXPECT_EQ(d(1, 1), 0.0);
  EXPECT_EQ(d(0, 1), 1.0);
  EXPECT_EQ(d(0, 0), std::sqrt(2.0));
  EXPECT_FALSE(d.target_empty);
  const auto e = distance_to_known(t, Label::Background);
  EXPECT_TRUE(e.target_empty);
  for (double v : e.values) EXPECT_TRUE(std::isinf(v));
}

TEST(DistanceToKnown, ExactAgainstBruteForce) {
  Rng r(2);
  for (int k = 0; k < 30; ++k) {
    const int h = lfp::testing::uni_int(r, 1, 40), w = lfp::testing::uni_int(r, 1, 40);
    const Trimap t = random_trimap(r, h, w, lfp::testing::uni(r, 0.2, 0.99));
    for (Label l : {Label::Foreground, Label::Background}) {
      EXPECT_EQ(distance_to_known(t, l).values, oracle::brute_distance(t, l));
    }
  }
}

TEST(DistanceToKnown, ZeroExactlyOnTargetsAndUnionIsMin) {
  Rng r(3);
  for (int k = 0; k < 10; ++k) {
    const Trimap t = random_trimap(r, 25, 19, 0.8);
    const auto f = distance_to_known(t, Label::Foreground);
    const auto b = distance_to_known(t, Label::Background);
    std::vector<std::uint8_t> known(t.labels().size());
    for (std::size_t i = 0; i < known.size(); ++i) {
      known[i] = t.labels()[i] != Label::Unknown;
      EXPECT_EQ(f.values[i] == 0.0, t.labels()[i] == Label::Foreground);
    }
    const auto u = euclidean_distance(known, 25, 19);
    for (std::size_t i = 0; i < known.size(); ++i) {
      EXPECT_EQ(u.values[i], std::min(f.values[i], b.values[i]));
    }
  }
}

TEST(DistanceToKnown, TranslationEquivariantInInterior) {
  Rng r(4);
  Trimap t(30, 30, Label::Unknown);
  for (int k = 0; k < 4; ++k) t(lfp::testing::uni_int(r, 8, 20), lfp::testing::uni_int(r, 8, 20)) = Label::Foreground;
  Trimap s(30, 30, Label::Unknown);
  const int dy = 3, dx = -2;
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 30; ++x) {
      const int sy = y - dy, sx = x - dx;
      if (sy >= 0 && sy < 30 && sx >= 0 && sx < 30) s(y, x) = t(sy, sx);
    }
  }
  const auto a = distance_to_known(t, Label::Foreground), b = distance_to_known(s, Label::Foreground);
  for (int y = 6; y < 24; ++y) {
    for (int x = 6; x < 24; ++x) EXPECT_EQ(b(y + dy, x + dx), a(y, x));
  }
}

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_EQ(percentile(v, 0), 1);
  EXPECT_EQ(percentile(v, 50), 3);
  EXPECT_EQ(percentile(v, 100), 5);
  EXPECT_DOUBLE_EQ(percentile(v, 25), 2);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 90), 9);
}

TEST(DatasetStats, DegenerateDistanceFive) {
  Trimap t5(6, 12, Label::Background);
  for (int y = 0; y < 6; ++y) {
    t5(y, 0) = Label::Foreground;
    for (int x = 1; x <= 10; ++x) t5(y, x) = Label::Unknown;
  }
  AlphaMatte a5(6, 12, 0.0);
  for (int y = 0; y < 6; ++y) a5(y, 5) = 1.0;
  // Only the x = 5 column is FG-like; it sits 5 px from the FG column.
  const auto s5 = dataset_distance_stats({{t5, a5}});
  ASSERT_EQ(s5.distances[FgLikeToFg].size(), 6u);
  for (double p : s5.percentiles[FgLikeToFg]) EXPECT_EQ(p, 5.0);
}

TEST(DatasetStats, PooledMatchesConcatenateThenSort) {
  Rng r(5);
  std::vector<std::pair<Trimap, AlphaMatte>> data;
  for (int k = 0; k < 3; ++k) data.emplace_back(random_trimap(r, 14, 17), lfp::testing::random_alpha(r, 14, 17));
  // One sample without known BG is skipped and counted.
  data.emplace_back(Trimap(5, 5, Label::Unknown), AlphaMatte(5, 5, 0.5));
  const auto s = dataset_distance_stats(data, 3);
  EXPECT_EQ(s.samples_used, 3u);
  EXPECT_EQ(s.samples_skipped, 1u);
  std::array<std::vector<double>, 4> want;
  for (int k = 0; k < 3; ++k) {
    const auto& [t, a] = data[static_cast<std::size_t>(k)];
    const auto f = oracle::brute_distance(t, Label::Foreground);
    const auto b = oracle::brute_distance(t, Label::Background);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (t.labels()[i] != Label::Unknown) continue;
      const bool fg = a.tensor()[i] >= 0.5;
      want[fg ? 0 : 2].push_back(f[i]);
      want[fg ? 1 : 3].push_back(b[i]);
    }
  }
  for (int c = 0; c < 4; ++c) {
    auto& v = want[static_cast<std::size_t>(c)];
    std::sort(v.begin(), v.end());
    EXPECT_EQ(s.distances[static_cast<std::size_t>(c)], v);
    double prev = 0;
    for (double d = 0; d < 20; d += 0.25) {
      const double cdf = s.cdf(c, d);
      EXPECT_GE(cdf, prev);
      prev = cdf;
    }
    EXPECT_EQ(s.cdf(c, 1e9), 1.0);
    for (std::size_t p = 1; p < 4; ++p) {
      EXPECT_LE(s.percentiles[static_cast<std::size_t>(c)][p - 1], s.percentiles[static_cast<std::size_t>(c)][p]);
    }
  }
}

TEST(DatasetStats, AllSkippedIsDataError) {
  EXPECT_THROW(dataset_distance_stats({{Trimap(4, 4, Label::Unknown), AlphaMatte(4, 4)}}), DataError);
}

TEST(DatasetStats, JsonAndPlot) {
  Rng r(6);
  const auto s = dataset_distance_stats({{random_trimap(r, 12, 12), lfp::testing::random_alpha(r, 12, 12)}});
  const std::string j = stats_to_json(s);
  EXPECT_NE(j.find("percentiles"), std::string::npos);
  const auto path = std::filesystem::temp_directory_path() / "lfp_test_plot.png";
  write_distance_plot(s, path.string());
  EXPECT_TRUE(std::filesystem::exists(path));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace lfp::analysis
