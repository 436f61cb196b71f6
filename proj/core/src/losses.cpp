#include "lfp/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lfp/errors.hpp"
#include "lfp/nn/resample.hpp"

namespace lfp::losses {

namespace {

Var zero() { return Var::constant(Tensor::scalar(0.0)); }

Tensor negated(Tensor t) {
  for (double& v : t.values()) v = -v;
  return t;
}

Tensor repeat(const Tensor& mask, int channels) {
  Tensor out = Tensor::chw(channels, mask.height(), mask.width());
  for (int c = 0; c < channels; ++c) {
    std::copy_n(mask.data(), mask.plane(), out.data() + c * mask.plane());
  }
  return out;
}

// sum(mask * |r|) / count, with mask broadcast over the channels of r.
Term masked_mean(const Var& residual, const Tensor& mask, std::size_t count) {
  if (count == 0) return {zero(), true};
  const Tensor m = repeat(mask, residual.value().channels());
  return {nn::scale(nn::sum(nn::mul_const(nn::abs(residual), m)), 1.0 / static_cast<double>(count)),
          false};
}

std::size_t mask_count(const std::vector<std::uint8_t>& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> all_pixels(int h, int w) {
  return std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 1);
}

void require_shape(const Var& v, int channels, int h, int w, const char* what) {
  const Tensor& t = v.value();
  if (t.rank() != 3 || t.channels() != channels || t.height() != h || t.width() != w) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(channels) + ", " +
                         std::to_string(h) + ", " + std::to_string(w) + "], got " +
                         t.shape_string());
  }
}

}  // namespace

void LossConfig::validate() const {
  if (lambda_alpha < 0.0 || lambda_fb < 0.0) throw ConfigError("loss weights must be >= 0");
  if (!(gamma > 0.0)) throw ConfigError("losses.gamma must be > 0");
  if (pyramid_levels < 1) throw ConfigError("losses.pyramid_levels must be >= 1");
}

double unknown_weight(std::size_t unknown_count, double gamma) {
  return std::max(1.0, std::sqrt(static_cast<double>(unknown_count) / gamma));
}

Term propagating_loss(const Var& context_alpha, const Tensor& context_alpha_gt,
                      const Trimap& context_trimap) {
  const int h = context_trimap.height(), w = context_trimap.width();
  require_shape(context_alpha, 1, h, w, "propagating_loss");
  if (!context_alpha.value().same_shape(context_alpha_gt)) {
    throw DimensionError("propagating_loss: ground truth shape mismatch");
  }
  const RegionMasks m = region_masks(context_trimap);
  return masked_mean(nn::add_const(context_alpha, negated(context_alpha_gt)),
                     mask_tensor(m.unknown, h, w), mask_count(m.unknown));
}

Term weighted_alpha_loss(const Var& alpha, const Tensor& alpha_gt, const Trimap& t,
                         double gamma) {
  const int h = t.height(), w = t.width();
  require_shape(alpha, 1, h, w, "weighted_alpha_loss");
  const RegionMasks m = region_masks(t);
  const std::size_t n = mask_count(m.unknown);
  Term term = masked_mean(nn::add_const(alpha, negated(alpha_gt)), mask_tensor(m.unknown, h, w), n);
  if (!term.empty_region) term.value = nn::scale(term.value, unknown_weight(n, gamma));
  return term;
}

Term composite_loss(const Var& alpha, const Sample& s, bool unknown_only) {
  const int h = s.trimap.height(), w = s.trimap.width();
  require_shape(alpha, 1, h, w, "composite_loss");
  const Tensor& f = s.fg_gt.tensor();
  const Tensor& b = s.bg_gt.tensor();
  const Tensor& img = s.image.tensor();
  Tensor diff = f;
  Tensor offset = b;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = f[i] - b[i];
    offset[i] = b[i] - img[i];
  }
  const Var r = nn::add_const(nn::mul_const(nn::repeat_channels(alpha, 3), diff), offset);
  const auto mask = unknown_only ? region_masks(s.trimap).unknown : all_pixels(h, w);
  return masked_mean(r, mask_tensor(mask, h, w), mask_count(mask));
}

std::vector<Var> laplacian_pyramid(const Var& x, int levels) {
  if (levels < 1) throw ParameterError("pyramid needs at least one level");
  const int h = x.value().height(), w = x.value().width();
  if (h < (1 << levels) || w < (1 << levels)) {
    throw ParameterError("pyramid with " + std::to_string(levels) + " levels needs sides >= " +
                         std::to_string(1 << levels) + ", got " + x.value().shape_string());
  }
  std::vector<Var> out;
  Var cur = x;
  for (int j = 0; j < levels; ++j) {
    const int ch = cur.value().height(), cw = cur.value().width();
    const nn::AxisMap dr = nn::pyramid_down_axis(ch), dc = nn::pyramid_down_axis(cw);
    const Var down = nn::resample(cur, dr, dc);
    const Var up = nn::resample(down, nn::pyramid_up_axis(dr.out_size, ch),
                                nn::pyramid_up_axis(dc.out_size, cw));
    out.push_back(nn::sub(cur, up));
    cur = down;
  }
  out.push_back(cur);
  return out;
}

Var laplacian_reconstruct(const std::vector<Var>& pyramid) {
  if (pyramid.empty()) throw ParameterError("empty pyramid");
  Var cur = pyramid.back();
  for (int j = static_cast<int>(pyramid.size()) - 2; j >= 0; --j) {
    const Tensor& band = pyramid[static_cast<std::size_t>(j)].value();
    const Var up = nn::resample(cur, nn::pyramid_up_axis(cur.value().height(), band.height()),
                                nn::pyramid_up_axis(cur.value().width(), band.width()));
    cur = nn::add(pyramid[static_cast<std::size_t>(j)], up);
  }
  return cur;
}

Var laplacian_loss(const Var& x, const Var& y, int levels) {
  if (!x.value().same_shape(y.value())) throw DimensionError("laplacian_loss: shape mismatch");
  const std::vector<Var> px = laplacian_pyramid(x, levels);
  const std::vector<Var> py = laplacian_pyramid(y, levels);
  Var total = zero();
  for (int j = 0; j <= levels; ++j) {
    const Var d = nn::mean(nn::abs(nn::sub(px[static_cast<std::size_t>(j)],
                                           py[static_cast<std::size_t>(j)])));
    total = nn::add(total, nn::scale(d, static_cast<double>(1 << j)));
  }
  return total;
}

namespace {

Var region_laplacian(const Var& x, const Tensor& gt, const Trimap& t, int levels,
                     bool full_patch) {
  if (full_patch) return laplacian_loss(x, Var::constant(gt), levels);
  const RegionMasks m = region_masks(t);
  const Tensor mask = repeat(mask_tensor(m.unknown, t.height(), t.width()), gt.channels());
  Tensor masked_gt = gt;
  for (std::size_t i = 0; i < gt.size(); ++i) masked_gt[i] *= mask[i];
  return laplacian_loss(nn::mul_const(x, mask), Var::constant(masked_gt), levels);
}

}  // namespace

AlphaLoss alpha_loss(const Var& alpha, const Sample& s, const LossConfig& cfg) {
  AlphaLoss out;
  out.weighted = weighted_alpha_loss(alpha, s.alpha_gt.tensor(), s.trimap, cfg.gamma);
  out.composite = composite_loss(alpha, s, cfg.composite_unknown_only);
  out.laplacian = region_laplacian(alpha, s.alpha_gt.tensor(), s.trimap, cfg.pyramid_levels,
                                   cfg.laplacian_full_patch);
  out.total = nn::add(nn::add(out.weighted.value, out.composite.value), out.laplacian);
  return out;
}

Term fb_reconstruction_loss(const Var& fg, const Var& bg, const Sample& s) {
  const int h = s.trimap.height(), w = s.trimap.width();
  require_shape(fg, 3, h, w, "fb_reconstruction_loss");
  require_shape(bg, 3, h, w, "fb_reconstruction_loss");
  const RegionMasks m = region_masks(s.trimap);
  const Term tf = masked_mean(nn::add_const(fg, negated(s.fg_gt.tensor())), mask_tensor(m.fg_or_unknown, h, w),
                              mask_count(m.fg_or_unknown));
  const Term tb = masked_mean(nn::add_const(bg, negated(s.bg_gt.tensor())), mask_tensor(m.bg_or_unknown, h, w),
                              mask_count(m.bg_or_unknown));
  return {nn::add(tf.value, tb.value), tf.empty_region || tb.empty_region};
}

Term fb_composite_loss(const Var& fg, const Var& bg, const Sample& s, bool unknown_only) {
  const int h = s.trimap.height(), w = s.trimap.width();
  require_shape(fg, 3, h, w, "fb_composite_loss");
  require_shape(bg, 3, h, w, "fb_composite_loss");
  const Tensor a3 = repeat(s.alpha_gt.tensor(), 3);
  Tensor inv = a3;
  for (double& v : inv.values()) v = 1.0 - v;
  const Var r = nn::add_const(nn::add(nn::mul_const(fg, a3), nn::mul_const(bg, inv)),
                              negated(s.image.tensor()));
  const auto mask = unknown_only ? region_masks(s.trimap).unknown : all_pixels(h, w);
  return masked_mean(r, mask_tensor(mask, h, w), mask_count(mask));
}

Var fb_laplacian_loss(const Var& fg, const Var& bg, const Sample& s, int levels) {
  return nn::add(laplacian_loss(fg, Var::constant(s.fg_gt.tensor()), levels),
                 laplacian_loss(bg, Var::constant(s.bg_gt.tensor()), levels));
}

MattingLoss matting_loss(const matting::MattingOutput& out, const Sample& s,
                         const LossConfig& cfg) {
  cfg.validate();
  MattingLoss l;
  l.alpha = alpha_loss(out.alpha, s, cfg);
  l.fb_reconstruction = fb_reconstruction_loss(out.fg, out.bg, s);
  l.fb_composite = fb_composite_loss(out.fg, out.bg, s, cfg.composite_unknown_only);
  if (cfg.laplacian_full_patch) {
    l.fb_laplacian = fb_laplacian_loss(out.fg, out.bg, s, cfg.pyramid_levels);
  } else {
    l.fb_laplacian = nn::add(
        region_laplacian(out.fg, s.fg_gt.tensor(), s.trimap, cfg.pyramid_levels, false),
        region_laplacian(out.bg, s.bg_gt.tensor(), s.trimap, cfg.pyramid_levels, false));
  }
  l.fb_total = nn::add(nn::add(l.fb_reconstruction.value, l.fb_composite.value), l.fb_laplacian);
  l.total = nn::add(nn::scale(l.alpha.total, cfg.lambda_alpha), nn::scale(l.fb_total, cfg.lambda_fb));
  l.empty_region = l.alpha.weighted.empty_region || l.alpha.composite.empty_region ||
                   l.fb_reconstruction.empty_region || l.fb_composite.empty_region;
  return l;
}

}  // namespace lfp::losses
