#include "lfp/inference.hpp"

#include <algorithm>
#include <new>

#include "lfp/errors.hpp"
#include "lfp/model.hpp"
#include "lfp/parallel.hpp"

namespace lfp::inference {

std::string to_string(Blend b) { return b == Blend::None ? "none" : "linear-ramp"; }

Blend parse_blend(const std::string& s) {
  if (s == "none") return Blend::None;
  if (s == "linear-ramp" || s == "linear_ramp") return Blend::LinearRamp;
  throw ConfigError("unknown blend mode '" + s + "' (expected none or linear-ramp)");
}

void InferenceConfig::validate() const {
  if (inner_side < 8 || inner_side % 8 != 0) {
    throw ConfigError("inference.inner_side must be a positive multiple of 8, got " +
                      std::to_string(inner_side));
  }
  if (overlap < 0 || overlap >= inner_side) {
    throw ConfigError("inference.overlap must lie in [0, inner_side)");
  }
}

namespace {

std::vector<int> axis_starts(int n, int s, int overlap) {
  if (n <= s) return {0};
  std::vector<int> out;
  const int stride = s - overlap;
  int p = 0;
  for (; p + s < n; p += stride) out.push_back(p);
  out.push_back(n - s);
  return out;
}

// Per position along an axis, the window whose centre is nearest (ties to
// the earlier window).
std::vector<int> axis_owner(int n, const std::vector<int>& starts, int s) {
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  std::vector<double> best(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const double c = starts[i] + s / 2.0;
    for (int p = std::max(0, starts[i]); p < std::min(n, starts[i] + s); ++p) {
      const double d = std::abs(p + 0.5 - c);
      if (owner[p] < 0 || d < best[p]) {
        owner[p] = static_cast<int>(i);
        best[p] = d;
      }
    }
  }
  return owner;
}

TilePrediction known_prediction(const Image& inner, const Trimap& t) {
  TilePrediction p{AlphaMatte(t.height(), t.width()), ColorMap::retag(inner),
                   ColorMap::retag(inner)};
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) p.alpha(y, x) = t(y, x) == Label::Foreground ? 1.0 : 0.0;
  }
  return p;
}

bool has_unknown(const Trimap& t, const PatchGeometry& g) {
  const int y1 = std::min(t.height(), g.inner_y + g.inner_side);
  const int x1 = std::min(t.width(), g.inner_x + g.inner_side);
  for (int y = std::max(0, g.inner_y); y < y1; ++y) {
    for (int x = std::max(0, g.inner_x); x < x1; ++x) {
      if (t(y, x) == Label::Unknown) return true;
    }
  }
  return false;
}

void check_prediction(const TilePrediction& p, int s) {
  if (p.alpha.height() != s || p.alpha.width() != s || p.fg.height() != s || p.fg.width() != s ||
      p.bg.height() != s || p.bg.width() != s) {
    throw DimensionError("tile model returned a prediction of the wrong size");
  }
}

TilePrediction evaluate(const Image& image, const Trimap& trimap, const PatchGeometry& g,
                        const TileModel& model, PadMode mode) {
  const int s = g.inner_side;
  const Image inner = crop_padded(image, g.inner_y, g.inner_x, s, s, mode);
  const Trimap inner_t = crop_padded(trimap, g.inner_y, g.inner_x, s, s, mode);
  TilePrediction p = model.predict(inner, inner_t, extract_context(image, trimap, g, mode));
  check_prediction(p, s);
  return p;
}

// Four quadrant tiles of half the side, each with its own context.
TilePrediction evaluate_bisected(const Image& image, const Trimap& trimap, const PatchGeometry& g,
                                 const TileModel& model, PadMode mode) {
  const int s = g.inner_side, h = s / 2;
  TilePrediction out{AlphaMatte(s, s), ColorMap(s, s), ColorMap(s, s)};
  for (int q = 0; q < 4; ++q) {
    const int oy = (q / 2) * h, ox = (q % 2) * h;
    const PatchGeometry sub =
        make_patch_geometry(g.inner_x + ox, g.inner_y + oy, h, image.height(), image.width());
    TilePrediction p;
    try {
      p = evaluate(image, trimap, sub, model, mode);
    } catch (const std::bad_alloc&) {
      throw ResourceError("out of memory evaluating a " + std::to_string(h) +
                          " px tile after bisection");
    }
    paste(out.alpha, p.alpha, oy, ox);
    paste(out.fg, p.fg, oy, ox);
    paste(out.bg, p.bg, oy, ox);
  }
  return out;
}

}  // namespace

std::vector<PatchGeometry> plan_tiles(int height, int width, const InferenceConfig& cfg) {
  cfg.validate();
  if (height < 1 || width < 1) throw DimensionError("image must be at least 1x1");
  const int s = cfg.inner_side;
  std::vector<PatchGeometry> out;
  for (int y : axis_starts(height, s, cfg.overlap)) {
    for (int x : axis_starts(width, s, cfg.overlap)) {
      out.push_back(make_patch_geometry(x, y, s, height, width));
    }
  }
  return out;
}

ContextPair extract_context(const Image& image, const Trimap& trimap, const PatchGeometry& g,
                            PadMode mode) {
  require_same_size(image.height(), image.width(), trimap.height(), trimap.width(),
                    "image and trimap");
  ContextPair c;
  c.geometry = g;
  c.image = crop_padded(image, g.context_y, g.context_x, g.context_side, g.context_side, mode);
  c.trimap = crop_padded(trimap, g.context_y, g.context_x, g.context_side, g.context_side, mode);
  return c;
}

TilePrediction NetworkTileModel::predict(const Image& inner_image, const Trimap& inner_trimap,
                                         const ContextPair& context) const {
  const ModelOutput out = model_.forward(inner_image, inner_trimap, context);
  return {AlphaMatte::clipped(out.matting.alpha.value()),
          ColorMap::clipped(out.matting.fg.value()), ColorMap::clipped(out.matting.bg.value())};
}

double tile_weight(int y, int x, int side, const InferenceConfig& cfg) {
  if (cfg.blend == Blend::None || cfg.overlap == 0) return 1.0;
  const double r = cfg.overlap;
  auto ramp = [&](int i) { return std::min({static_cast<double>(i + 1), static_cast<double>(side - i), r}) / r; };
  return ramp(y) * ramp(x);
}

InferenceResult run_tiled(const Image& image, const Trimap& trimap, const TileModel& model,
                          const InferenceConfig& cfg) {
  require_same_size(image.height(), image.width(), trimap.height(), trimap.width(),
                    "image and trimap");
  const std::vector<PatchGeometry> plan = plan_tiles(image.height(), image.width(), cfg);
  const int H = image.height(), W = image.width(), s = cfg.inner_side;

  enum class Kind { Evaluated, Skipped, Bisected };
  std::vector<TilePrediction> preds(plan.size());
  std::vector<Kind> kinds(plan.size(), Kind::Evaluated);
  const unsigned workers = cfg.workers ? cfg.workers : worker_count();
  parallel_for(plan.size(), workers, [&](std::size_t i) {
    const PatchGeometry& g = plan[i];
    if (cfg.skip_known_tiles && !has_unknown(trimap, g)) {
      kinds[i] = Kind::Skipped;
      preds[i] = known_prediction(crop_padded(image, g.inner_y, g.inner_x, s, s, cfg.pad_mode),
                                  crop_padded(trimap, g.inner_y, g.inner_x, s, s, cfg.pad_mode));
      return;
    }
    try {
      preds[i] = evaluate(image, trimap, g, model, cfg.pad_mode);
    } catch (const std::bad_alloc&) {
      kinds[i] = Kind::Bisected;
      preds[i] = evaluate_bisected(image, trimap, g, model, cfg.pad_mode);
    }
  });

  // Without blending every pixel comes from exactly one tile.
  const bool owned = cfg.blend == Blend::None;
  const std::vector<int> ys = axis_starts(H, s, cfg.overlap), xs = axis_starts(W, s, cfg.overlap);
  const std::vector<int> own_y = axis_owner(H, ys, s), own_x = axis_owner(W, xs, s);
  const int nx = static_cast<int>(xs.size());

  // Stitch in plan order so overlapping sums do not depend on scheduling.
  std::vector<double> acc(static_cast<std::size_t>(H) * W * 7, 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(H) * W, 0.0);
  InferenceResult r;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const PatchGeometry& g = plan[i];
    const TilePrediction& p = preds[i];
    switch (kinds[i]) {
      case Kind::Skipped: ++r.tiles_skipped; break;
      case Kind::Bisected: ++r.tiles_bisected; [[fallthrough]];
      case Kind::Evaluated: ++r.tiles_evaluated; break;
    }
    const int y1 = std::min(H, g.inner_y + s), x1 = std::min(W, g.inner_x + s);
    for (int y = std::max(0, g.inner_y); y < y1; ++y) {
      for (int x = std::max(0, g.inner_x); x < x1; ++x) {
        const int ty = y - g.inner_y, tx = x - g.inner_x;
        if (owned && own_y[y] * nx + own_x[x] != static_cast<int>(i)) continue;
        const double w = tile_weight(ty, tx, s, cfg);
        const std::size_t k = static_cast<std::size_t>(y) * W + x;
        double* a = &acc[k * 7];
        a[0] += w * p.alpha(ty, tx);
        for (int c = 0; c < 3; ++c) {
          a[1 + c] += w * p.fg.at(c, ty, tx);
          a[4 + c] += w * p.bg.at(c, ty, tx);
        }
        wsum[k] += w;
      }
    }
  }
  r.raw_alpha = AlphaMatte(H, W);
  r.fg = ColorMap(H, W);
  r.bg = ColorMap(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * W + x;
      const double* a = &acc[k * 7];
      const double w = wsum[k];
      r.raw_alpha(y, x) = std::clamp(a[0] / w, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        r.fg.at(c, y, x) = std::clamp(a[1 + c] / w, 0.0, 1.0);
        r.bg.at(c, y, x) = std::clamp(a[4 + c] / w, 0.0, 1.0);
      }
    }
  }
  r.alpha = clamp_by_trimap(r.raw_alpha, trimap);
  return r;
}

template <class Map>
Map apply_flip(const Map& m, Flip f) {
  const int H = m.height(), W = m.width();
  Map out(H, W);
  const bool fx = f == Flip::Horizontal || f == Flip::Rotate180;
  const bool fy = f == Flip::Vertical || f == Flip::Rotate180;
  for (int c = 0; c < Map::kChannels; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        out.at(c, y, x) = m.at(c, fy ? H - 1 - y : y, fx ? W - 1 - x : x);
      }
    }
  }
  return out;
}

template Image apply_flip(const Image&, Flip);
template ColorMap apply_flip(const ColorMap&, Flip);
template AlphaMatte apply_flip(const AlphaMatte&, Flip);

Trimap apply_flip(const Trimap& t, Flip f) {
  const int H = t.height(), W = t.width();
  Trimap out(H, W);
  const bool fx = f == Flip::Horizontal || f == Flip::Rotate180;
  const bool fy = f == Flip::Vertical || f == Flip::Rotate180;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) out(y, x) = t(fy ? H - 1 - y : y, fx ? W - 1 - x : x);
  }
  return out;
}

namespace {

void add_into(nn::Tensor& dst, const nn::Tensor& src) {
  auto d = dst.values();
  auto v = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += v[i];
}

}  // namespace

InferenceResult run_tta(const Image& image, const Trimap& trimap, const TileModel& model,
                        const InferenceConfig& cfg) {
  constexpr Flip kFlips[4] = {Flip::Identity, Flip::Horizontal, Flip::Vertical, Flip::Rotate180};
  InferenceResult sum;
  for (int i = 0; i < 4; ++i) {
    // Every transform here is its own inverse.
    const Flip f = kFlips[i];
    InferenceResult r = run_tiled(apply_flip(image, f), apply_flip(trimap, f), model, cfg);
    r.raw_alpha = apply_flip(r.raw_alpha, f);
    r.fg = apply_flip(r.fg, f);
    r.bg = apply_flip(r.bg, f);
    if (i == 0) {
      sum = r;
      continue;
    }
    add_into(sum.raw_alpha.tensor(), r.raw_alpha.tensor());
    add_into(sum.fg.tensor(), r.fg.tensor());
    add_into(sum.bg.tensor(), r.bg.tensor());
    sum.tiles_evaluated += r.tiles_evaluated;
    sum.tiles_skipped += r.tiles_skipped;
    sum.tiles_bisected += r.tiles_bisected;
  }
  for (auto* t : {&sum.raw_alpha.tensor(), &sum.fg.tensor(), &sum.bg.tensor()}) {
    for (double& v : t->values()) v /= 4.0;
  }
  sum.alpha = clamp_by_trimap(sum.raw_alpha, trimap);
  return sum;
}

InferenceResult infer(const Image& image, const Trimap& trimap, const TileModel& model,
                      const InferenceConfig& cfg) {
  return cfg.tta ? run_tta(image, trimap, model, cfg) : run_tiled(image, trimap, model, cfg);
}

}  // namespace lfp::inference
