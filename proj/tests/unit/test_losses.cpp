#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "lfp/losses.hpp"
#include "lfp/oracle.hpp"

namespace lfp::losses {
namespace {

using lfp::testing::random_alpha;
using lfp::testing::random_sample;
using lfp::testing::random_tensor;
using lfp::testing::Rng;

Var cst(const Tensor& t) { return Var::constant(t); }

Tensor shifted(const Tensor& t, Rng& r, double amp) {
  Tensor o = t;
  for (double& v : o.values()) v = std::clamp(v + lfp::testing::uni(r, -amp, amp), 0.0, 1.0);
  return o;
}

// Perfect prediction on an exactly composited sample.
Sample exact_sample(Rng& r, int side) { return random_sample(r, side, side, 0.0); }

TEST(PropagatingLoss, Examples) {
  Trimap t(1, 3, Label::Foreground);
  t(0, 0) = Label::Unknown;
  t(0, 2) = Label::Unknown;
  Tensor c = Tensor::chw(1, 1, 3, 0.5), gt = c;
  c.at(0, 0, 0) = 0.7;
  c.at(0, 0, 1) = 0.0;  // known pixel, ignored
  c.at(0, 0, 2) = 0.1;
  EXPECT_NEAR(propagating_loss(cst(c), gt, t).item(), 0.3, 1e-15);
  EXPECT_EQ(propagating_loss(cst(gt), gt, t).item(), 0.0);
  const Term e = propagating_loss(cst(c), gt, Trimap(1, 3, Label::Background));
  EXPECT_TRUE(e.empty_region);
  EXPECT_EQ(e.item(), 0.0);
}

TEST(PropagatingLoss, MatchesOracle) {
  Rng r(1);
  for (int k = 0; k < 10; ++k) {
    const Tensor c = random_tensor(r, 1, 8, 8), gt = random_tensor(r, 1, 8, 8);
    const Trimap t = lfp::testing::random_trimap(r, 8, 8);
    EXPECT_NEAR(propagating_loss(cst(c), gt, t).item(), oracle::propagating_loss(c, gt, t), 1e-14);
  }
}

TEST(UnknownWeight, ClampAndSquareRoot) {
  EXPECT_EQ(unknown_weight(400, 100), 2.0);
  EXPECT_EQ(unknown_weight(100, 100), 1.0);
  EXPECT_EQ(unknown_weight(7, 100), 1.0);
  EXPECT_EQ(unknown_weight(0, 100), 1.0);
  EXPECT_NEAR(unknown_weight(900, 100), 3.0, 1e-15);
}

TEST(WeightedAlphaLoss, LargeUnknownRegionDoubles) {
  Rng r(2);
  const Tensor a = random_tensor(r, 1, 20, 20), gt = random_tensor(r, 1, 20, 20);
  const Trimap t(20, 20, Label::Unknown);
  const double plain = weighted_alpha_loss(cst(a), gt, t, 400).item();
  EXPECT_NEAR(weighted_alpha_loss(cst(a), gt, t, 100).item(), 2 * plain, 1e-14);
  double mae = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mae += std::abs(a[i] - gt[i]);
  EXPECT_NEAR(plain, mae / 400, 1e-14);
  for (int k = 0; k < 5; ++k) {
    const Trimap rt = lfp::testing::random_trimap(r, 20, 20);
    EXPECT_NEAR(weighted_alpha_loss(cst(a), gt, rt, 37).item(),
                oracle::weighted_alpha_loss(a, gt, rt, 37), 1e-13);
  }
}

TEST(CompositeLoss, SinglePixelOffByDelta) {
  Sample s{Image(1, 1, 0.5), Trimap(1, 1, Label::Unknown), AlphaMatte(1, 1, 0.5), ColorMap(1, 1, 1.0),
           ColorMap(1, 1, 0.0)};
  const double d = 0.125;
  EXPECT_NEAR(composite_loss(cst(Tensor::chw(1, 1, 1, 0.5 + d)), s).item(), 3 * d, 1e-15);
}

TEST(CompositeLoss, MatchesOracleInBothRegionModes) {
  Rng r(3);
  for (int k = 0; k < 8; ++k) {
    const Sample s = random_sample(r, 8, 8);
    const Tensor a = random_tensor(r, 1, 8, 8);
    for (bool u : {true, false}) {
      EXPECT_NEAR(composite_loss(cst(a), s, u).item(), oracle::composite_loss(a, s, u), 1e-13);
    }
  }
}

TEST(FbLosses, Examples) {
  Trimap t(1, 2, Label::Background);
  t(0, 0) = Label::Foreground;
  Sample s{Image(1, 2, 0.3), t, AlphaMatte(1, 2, 0.0), ColorMap(1, 2, 0.3), ColorMap(1, 2, 0.3)};
  s.alpha_gt(0, 0) = 1.0;
  Tensor f = s.fg_gt.tensor();
  f.at(0, 0, 0) += 0.1;
  // T^FU = {(0,0)}, T^BU = {(0,1)} with B exact.
  EXPECT_NEAR(fb_reconstruction_loss(cst(f), cst(s.bg_gt.tensor()), s).item(), 0.1, 1e-15);
  // alpha_gt = 1 at the unknown pixel: contribution |F - I| there.
  s.trimap(0, 0) = Label::Unknown;
  EXPECT_NEAR(fb_composite_loss(cst(f), cst(s.bg_gt.tensor()), s).item(), 0.1, 1e-15);
}

TEST(FbLosses, MatchOracles) {
  Rng r(4);
  for (int k = 0; k < 6; ++k) {
    const Sample s = random_sample(r, 8, 8);
    const Tensor f = random_tensor(r, 3, 8, 8), b = random_tensor(r, 3, 8, 8);
    EXPECT_NEAR(fb_reconstruction_loss(cst(f), cst(b), s).item(), oracle::fb_reconstruction_loss(f, b, s),
                1e-13);
    for (bool u : {true, false}) {
      EXPECT_NEAR(fb_composite_loss(cst(f), cst(b), s, u).item(), oracle::fb_composite_loss(f, b, s, u),
                  1e-13);
    }
    EXPECT_NEAR(fb_laplacian_loss(cst(f), cst(b), s, 2).value().item(), oracle::fb_laplacian_loss(f, b, s, 2),
                1e-12);
    const double sum = laplacian_loss(cst(f), cst(s.fg_gt.tensor()), 2).value().item() +
                       laplacian_loss(cst(b), cst(s.bg_gt.tensor()), 2).value().item();
    EXPECT_NEAR(fb_laplacian_loss(cst(f), cst(b), s, 2).value().item(), sum, 1e-14);
  }
}

TEST(LaplacianPyramid, ConstantInput) {
  const auto p = laplacian_pyramid(cst(Tensor::chw(1, 16, 16, 0.3)), 3);
  ASSERT_EQ(p.size(), 4u);
  for (int j = 0; j < 3; ++j) {
    for (double v : p[j].value().values()) EXPECT_NEAR(v, 0.0, 1e-14);
  }
  for (double v : p[3].value().values()) EXPECT_NEAR(v, 0.3, 1e-14);
  EXPECT_EQ(p[3].value().height(), 2);
}

TEST(LaplacianPyramid, ReconstructsAndMatchesDenseOracle) {
  Rng r(5);
  for (auto [h, w, j] : {std::tuple{16, 16, 4}, {13, 21, 2}, {8, 8, 3}, {32, 24, 3}}) {
    const Tensor x = random_tensor(r, 2, h, w);
    const auto p = laplacian_pyramid(cst(x), j);
    EXPECT_LT(lfp::testing::max_abs_diff(laplacian_reconstruct(p).value(), x), 1e-12);
    const auto d = oracle::dense_laplacian_pyramid(x, j);
    ASSERT_EQ(d.size(), p.size());
    for (std::size_t l = 0; l < d.size(); ++l) {
      ASSERT_EQ(d[l].shape(), p[l].value().shape());
      EXPECT_LT(lfp::testing::max_abs_diff(d[l], p[l].value()), 1e-12) << l;
    }
  }
  EXPECT_THROW(laplacian_pyramid(cst(Tensor::chw(1, 7, 16)), 3), ParameterError);
}

TEST(LaplacianLoss, IdentitySymmetryAndOffset) {
  Rng r(6);
  const Tensor x = random_tensor(r, 1, 16, 16), y = random_tensor(r, 1, 16, 16);
  EXPECT_EQ(laplacian_loss(cst(x), cst(x), 4).value().item(), 0.0);
  EXPECT_NEAR(laplacian_loss(cst(x), cst(y), 4).value().item(),
              laplacian_loss(cst(y), cst(x), 4).value().item(), 1e-15);
  EXPECT_NEAR(laplacian_loss(cst(x), cst(y), 3).value().item(), oracle::dense_laplacian_loss(x, y, 3), 1e-12);
  Tensor xd = x;
  const double d = 0.0625;
  for (double& v : xd.values()) v += d;
  for (int j : {1, 2, 4}) {
    EXPECT_NEAR(laplacian_loss(cst(xd), cst(x), j).value().item(), std::ldexp(d, j), 1e-12);
    const auto terms = oracle::dense_laplacian_terms(xd, x, j);
    for (int l = 0; l < j; ++l) EXPECT_NEAR(terms[l], 0.0, 1e-12);
    EXPECT_NEAR(terms[j], std::ldexp(d, j), 1e-12);
  }
}

TEST(AlphaLoss, ComponentSumAndZeroAtTruth) {
  Rng r(7);
  LossConfig cfg;
  cfg.pyramid_levels = 3;
  for (int k = 0; k < 4; ++k) {
    const Sample s = exact_sample(r, 16);
    EXPECT_NEAR(alpha_loss(cst(s.alpha_gt.tensor()), s, cfg).total.value().item(), 0.0, 1e-12);
    const Tensor a = shifted(s.alpha_gt.tensor(), r, 0.2);
    const AlphaLoss l = alpha_loss(cst(a), s, cfg);
    EXPECT_NEAR(l.total.value().item(), l.weighted.item() + l.composite.item() + l.laplacian.value().item(),
                1e-14);
    EXPECT_GT(l.total.value().item(), 0.0);
  }
}

matting::MattingOutput output_of(const Tensor& a, const Tensor& f, const Tensor& b) {
  return {cst(a), cst(f), cst(b), cst(nn::Tensor())};
}

TEST(MattingLoss, ZeroAtTruthAndReducesWithoutFb) {
  Rng r(8);
  LossConfig cfg;
  cfg.pyramid_levels = 3;
  const Sample s = exact_sample(r, 16);
  const MattingLoss zero =
      matting_loss(output_of(s.alpha_gt.tensor(), s.fg_gt.tensor(), s.bg_gt.tensor()), s, cfg);
  EXPECT_NEAR(zero.total.value().item(), 0.0, 1e-12);

  const Tensor a = shifted(s.alpha_gt.tensor(), r, 0.3), f = shifted(s.fg_gt.tensor(), r, 0.3),
               b = shifted(s.bg_gt.tensor(), r, 0.3);
  const MattingLoss l = matting_loss(output_of(a, f, b), s, cfg);
  EXPECT_NEAR(l.total.value().item(), oracle::matting_loss(a, f, b, s, cfg), 1e-12);
  EXPECT_NEAR(l.fb_total.value().item(),
              l.fb_reconstruction.item() + l.fb_composite.item() + l.fb_laplacian.value().item(), 1e-14);
  EXPECT_NEAR(l.total.value().item(),
              cfg.lambda_alpha * l.alpha.total.value().item() + cfg.lambda_fb * l.fb_total.value().item(), 1e-14);
  cfg.lambda_fb = 0;
  EXPECT_NEAR(matting_loss(output_of(a, f, b), s, cfg).total.value().item(),
              alpha_loss(cst(a), s, cfg).total.value().item(), 1e-15);
}

TEST(Losses, PureL1TermsScaleWithResidual) {
  Rng r(9);
  const Sample s = random_sample(r, 8, 8);
  const Tensor ra = random_tensor(r, 1, 8, 8, -0.2, 0.2);
  const Tensor rf = random_tensor(r, 3, 8, 8, -0.2, 0.2), rb = random_tensor(r, 3, 8, 8, -0.2, 0.2);
  auto plus = [](const Tensor& base, const Tensor& res, double k) {
    Tensor o = base;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += k * res[i];
    return o;
  };
  const double w1 = weighted_alpha_loss(cst(plus(s.alpha_gt.tensor(), ra, 1)), s.alpha_gt.tensor(),
                                        s.trimap, 5).item();
  const double f1 = fb_reconstruction_loss(cst(plus(s.fg_gt.tensor(), rf, 1)),
                                           cst(plus(s.bg_gt.tensor(), rb, 1)), s).item();
  for (double k : {0.5, 2.0}) {
    EXPECT_NEAR(weighted_alpha_loss(cst(plus(s.alpha_gt.tensor(), ra, k)), s.alpha_gt.tensor(), s.trimap, 5)
                    .item(),
                k * w1, 1e-13);
    EXPECT_NEAR(fb_reconstruction_loss(cst(plus(s.fg_gt.tensor(), rf, k)), cst(plus(s.bg_gt.tensor(), rb, k)),
                                       s)
                    .item(),
                k * f1, 1e-13);
  }
}

TEST(Losses, NonNegativeOnRandomInputs) {
  Rng r(10);
  LossConfig cfg;
  cfg.pyramid_levels = 2;
  for (int k = 0; k < 10; ++k) {
    const Sample s = random_sample(r, 8, 8);
    const Tensor a = random_tensor(r, 1, 8, 8), f = random_tensor(r, 3, 8, 8), b = random_tensor(r, 3, 8, 8);
    const MattingLoss l = matting_loss(output_of(a, f, b), s, cfg);
    for (double v : {l.total.value().item(), l.alpha.weighted.item(), l.alpha.composite.item(),
                     l.alpha.laplacian.value().item(), l.fb_reconstruction.item(), l.fb_composite.item(),
                     l.fb_laplacian.value().item()}) {
      EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Losses, EmptyUnknownRegionFlagged) {
  Rng r(11);
  Sample s = random_sample(r, 8, 8);
  s.trimap = Trimap(8, 8, Label::Foreground);
  const Tensor a = random_tensor(r, 1, 8, 8);
  const Term w = weighted_alpha_loss(cst(a), s.alpha_gt.tensor(), s.trimap, 5);
  EXPECT_TRUE(w.empty_region);
  EXPECT_EQ(w.item(), 0.0);
  EXPECT_TRUE(composite_loss(cst(a), s).empty_region);
  EXPECT_FALSE(composite_loss(cst(a), s, false).empty_region);
  const LossConfig cfg;
  s = random_sample(r, 16, 16);
  s.trimap = Trimap(16, 16, Label::Background);
  EXPECT_TRUE(matting_loss(output_of(random_tensor(r, 1, 16, 16), random_tensor(r, 3, 16, 16),
                                     random_tensor(r, 3, 16, 16)),
                           s, cfg)
                  .empty_region);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng r(12);
  const Sample s = random_sample(r, 8, 8);
  LossConfig cfg;
  cfg.pyramid_levels = 3;
  cfg.gamma = 10;
  const Tensor a = random_tensor(r, 1, 8, 8, 0.05, 0.95), f = random_tensor(r, 3, 8, 8, 0.05, 0.95),
               b = random_tensor(r, 3, 8, 8, 0.05, 0.95);
  const std::vector<std::pair<const char*, oracle::ScalarFn>> cases = {
      {"propagating", [&](const auto& v) { return propagating_loss(v[0], s.alpha_gt.tensor(), s.trimap).value; }},
      {"weighted", [&](const auto& v) { return weighted_alpha_loss(v[0], s.alpha_gt.tensor(), s.trimap, 10).value; }},
      {"composite", [&](const auto& v) { return composite_loss(v[0], s).value; }},
      {"laplacian", [&](const auto& v) { return laplacian_loss(v[0], cst(s.alpha_gt.tensor()), 3); }},
      {"alpha", [&](const auto& v) { return alpha_loss(v[0], s, cfg).total; }},
  };
  for (const auto& [name, fn] : cases) {
    const auto g = oracle::finite_difference_check(fn, {a});
    EXPECT_LT(g.max_rel_error, 1e-4) << name;
  }
  const std::vector<std::pair<const char*, oracle::ScalarFn>> fb_cases = {
      {"fb_reconstruction", [&](const auto& v) { return fb_reconstruction_loss(v[0], v[1], s).value; }},
      {"fb_composite", [&](const auto& v) { return fb_composite_loss(v[0], v[1], s).value; }},
      {"fb_laplacian", [&](const auto& v) { return fb_laplacian_loss(v[0], v[1], s, 3); }},
  };
  for (const auto& [name, fn] : fb_cases) {
    EXPECT_LT(oracle::finite_difference_check(fn, {f, b}).max_rel_error, 1e-4) << name;
  }
  const auto full = oracle::finite_difference_check(
      [&](const auto& v) { return matting_loss({v[0], v[1], v[2], cst(Tensor())}, s, cfg).total; }, {a, f, b});
  EXPECT_LT(full.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace lfp::losses
