#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "lfp/core.hpp"
#include "lfp/geometry.hpp"
#include "lfp/io.hpp"

namespace lfp {
namespace {

using testing::random_tensor;
using testing::random_trimap;
using testing::Rng;

ColorMap constant_color(int h, int w, double v) { return ColorMap(h, w, v); }

TEST(Composite, AlphaOneGivesForeground) {
  Rng r(1);
  const auto fg = ColorMap::from_tensor(random_tensor(r, 3, 5, 7));
  const auto bg = ColorMap::from_tensor(random_tensor(r, 3, 5, 7));
  EXPECT_EQ(composite(fg, bg, AlphaMatte(5, 7, 1.0)).tensor(), fg.tensor());
  EXPECT_EQ(composite(fg, bg, AlphaMatte(5, 7, 0.0)).tensor(), bg.tensor());
}

TEST(Composite, QuarterAlphaWhiteOverGray) {
  const Image out = composite(constant_color(3, 4, 1.0), constant_color(3, 4, 0.2), AlphaMatte(3, 4, 0.25));
  for (double v : out.tensor().values()) EXPECT_NEAR(v, 0.4, 1e-15);
}

TEST(Composite, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(composite(constant_color(3, 4, 0), constant_color(3, 4, 0), AlphaMatte(4, 3)),
               DimensionError);
}

TEST(Composite, AffineInAlpha) {
  Rng r(2);
  for (int k = 0; k < 10; ++k) {
    const auto fg = ColorMap::from_tensor(random_tensor(r, 3, 6, 6));
    const auto bg = ColorMap::from_tensor(random_tensor(r, 3, 6, 6));
    const auto a1 = testing::random_alpha(r, 6, 6), a2 = testing::random_alpha(r, 6, 6);
    const double lam = testing::uni(r, 0, 1);
    AlphaMatte mix(6, 6);
    for (std::size_t i = 0; i < 36; ++i) {
      mix.tensor()[i] = lam * a1.tensor()[i] + (1 - lam) * a2.tensor()[i];
    }
    const auto c = composite(fg, bg, mix).tensor();
    const auto c1 = composite(fg, bg, a1).tensor(), c2 = composite(fg, bg, a2).tensor();
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(c[i], lam * c1[i] + (1 - lam) * c2[i], 1e-12);
    }
    EXPECT_LT(testing::max_abs_diff(composite(fg, fg, a1).tensor(), fg.tensor()), 1e-12);
  }
}

TEST(PixelMap, RejectsOutOfRangeAndWrongShape) {
  EXPECT_THROW(AlphaMatte::from_tensor(nn::Tensor::chw(1, 2, 2, 1.5)), DataError);
  EXPECT_THROW(AlphaMatte::from_tensor(nn::Tensor::chw(3, 2, 2, 0.5)), DimensionError);
  EXPECT_THROW(AlphaMatte(0, 3), DimensionError);
  const auto c = AlphaMatte::clipped(nn::Tensor::chw(1, 1, 2, -0.5));
  EXPECT_EQ(c(0, 0), 0.0);
}

TEST(EncodeTrimap, OneHotChannels) {
  Trimap t(2, 2);
  t(0, 0) = Label::Foreground;
  t(0, 1) = Label::Foreground;
  t(1, 0) = Label::Background;
  t(1, 1) = Label::Unknown;
  const auto e = encode_trimap(t);
  ASSERT_EQ(e.shape(), (std::vector<int>{3, 2, 2}));
  EXPECT_EQ(e.at(0, 0, 0), 1.0);
  EXPECT_EQ(e.at(1, 0, 0), 0.0);
  EXPECT_EQ(e.at(2, 1, 1), 1.0);
  double sums[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 2; ++y) {
      for (int x = 0; x < 2; ++x) sums[c] += e.at(c, y, x);
    }
  }
  EXPECT_EQ(sums[0], 2.0);
  EXPECT_EQ(sums[1], 1.0);
  EXPECT_EQ(sums[2], 1.0);
}

TEST(EncodeTrimap, ChannelsSumToOne) {
  Rng r(3);
  const Trimap t = random_trimap(r, 9, 11);
  const auto e = encode_trimap(t);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 11; ++x) EXPECT_EQ(e.at(0, y, x) + e.at(1, y, x) + e.at(2, y, x), 1.0);
  }
}

TEST(RegionMasks, DegenerateTrimaps) {
  const auto fg = region_masks(Trimap(3, 3, Label::Foreground));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(fg.unknown[i], 0);
    EXPECT_EQ(fg.fg_or_unknown[i], 1);
    EXPECT_EQ(fg.bg_or_unknown[i], 0);
  }
  const auto u = region_masks(Trimap(3, 3, Label::Unknown));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(u.unknown[i] & u.fg_or_unknown[i] & u.bg_or_unknown[i], 1);
  }
}

TEST(RegionMasks, MatchPerPixelScan) {
  Rng r(4);
  for (int k = 0; k < 20; ++k) {
    const Trimap t = random_trimap(r, 8, 8);
    const auto m = region_masks(t);
    std::size_t fu = 0;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * 8 + x;
        const Label l = t(y, x);
        EXPECT_EQ(m.unknown[i], l == Label::Unknown);
        EXPECT_EQ(m.fg_or_unknown[i], l != Label::Background);
        EXPECT_EQ(m.bg_or_unknown[i], l != Label::Foreground);
        EXPECT_TRUE(m.fg_or_unknown[i] || m.bg_or_unknown[i]);
        fu += m.fg_or_unknown[i];
      }
    }
    EXPECT_EQ(fu, t.count(Label::Foreground) + t.count(Label::Unknown));
  }
}

TEST(ClampByTrimap, SelectsPerPixelAndIsIdempotent) {
  Rng r(5);
  const auto a = testing::random_alpha(r, 7, 9);
  EXPECT_EQ(clamp_by_trimap(a, Trimap(7, 9, Label::Unknown)), a);
  const AlphaMatte ones = clamp_by_trimap(a, Trimap(7, 9, Label::Foreground));
  for (double v : ones.tensor().values()) {
    EXPECT_EQ(v, 1.0);
  }
  const Trimap t = random_trimap(r, 7, 9);
  const auto c = clamp_by_trimap(a, t);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      const double want = t(y, x) == Label::Foreground ? 1.0
                          : t(y, x) == Label::Background ? 0.0
                                                         : a(y, x);
      EXPECT_EQ(c(y, x), want);
    }
  }
  EXPECT_EQ(clamp_by_trimap(c, t), c);
}

TEST(TrimapCodes, OnlyCanonicalCodes) {
  EXPECT_EQ(Trimap::from_code(0), Label::Background);
  EXPECT_EQ(Trimap::from_code(128), Label::Unknown);
  EXPECT_EQ(Trimap::from_code(255), Label::Foreground);
  for (int c : {1, 127, 129, 254, 64}) EXPECT_THROW(Trimap::from_code(c), DataError);
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("lfp_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

using IoRoundTrip = TempDir;

TEST_F(IoRoundTrip, TrimapAndEightBitImage) {
  Rng r(6);
  const Trimap t = random_trimap(r, 13, 17);
  io::write_trimap(path("t.png"), t);
  EXPECT_EQ(io::read_trimap(path("t.png")), t);

  Image img(4, 5);
  for (std::size_t i = 0; i < img.tensor().size(); ++i) img.tensor()[i] = (i * 7 % 256) / 255.0;
  io::write_image(path("i.png"), img);
  const Image back = io::read_image(path("i.png"));
  EXPECT_LT(testing::max_abs_diff(back.tensor(), img.tensor()), 1e-12);
}

TEST_F(IoRoundTrip, SixteenBitAlpha) {
  Rng r(7);
  AlphaMatte a(6, 6);
  for (double& v : a.tensor().values()) v = std::round(testing::uni(r, 0, 65535)) / 65535.0;
  io::write_alpha(path("a.png"), a, true);
  EXPECT_LT(testing::max_abs_diff(io::read_alpha(path("a.png")).tensor(), a.tensor()), 1e-12);
}

TEST_F(IoRoundTrip, NonCanonicalTrimapCodeRejected) {
  AlphaMatte a(3, 3, 100.0 / 255.0);
  io::write_alpha(path("bad.png"), a);
  EXPECT_THROW(io::read_trimap(path("bad.png")), DataError);
}

TEST_F(IoRoundTrip, MissingFileIsIoError) {
  EXPECT_THROW(io::read_image(path("nope.png")), IoError);
}

TEST(PatchGeometry, CentredContextAndCornerPads) {
  const PatchGeometry g = make_patch_geometry(0, 0, 64, 200, 300);
  EXPECT_EQ(g.context_side, 128);
  EXPECT_EQ(g.inner_offset(), 32);
  EXPECT_EQ(g.context_pad.left, 32);
  EXPECT_EQ(g.context_pad.top, 32);
  EXPECT_EQ(g.context_pad.right, 0);
  EXPECT_EQ(g.inner_pad, Padding{});
  const PatchGeometry interior = make_patch_geometry(100, 60, 64, 200, 300);
  EXPECT_EQ(interior.context_pad, Padding{});
  EXPECT_THROW(make_patch_geometry(0, 0, 7, 10, 10), GeometryError);
}

TEST(CropPadded, ReflectMatchesMirrorIndex) {
  Rng r(8);
  const Image img = Image::from_tensor(random_tensor(r, 3, 10, 12));
  const Image c = crop_padded(img, -6, -4, 24, 26, PadMode::Reflect);
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 26; ++x) {
        EXPECT_EQ(c.at(ch, y, x), img.at(ch, mirror(y - 6, 10), mirror(x - 4, 12)));
      }
    }
  }
  EXPECT_THROW(crop_window(img, 5, 5, 6, 6), GeometryError);
}

TEST(Paste, ClipsAtBorders) {
  AlphaMatte dst(4, 4, 0.0);
  paste(dst, AlphaMatte(3, 3, 1.0), 2, -1);
  EXPECT_EQ(dst(2, 0), 1.0);
  EXPECT_EQ(dst(3, 1), 1.0);
  EXPECT_EQ(dst(3, 2), 0.0);
  EXPECT_EQ(dst(1, 0), 0.0);
}

}  // namespace
}  // namespace lfp
