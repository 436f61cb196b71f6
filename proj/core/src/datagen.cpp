#include "lfp/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "lfp/errors.hpp"
#include "lfp/io.hpp"
#include "lfp/nn/autograd.hpp"
#include "lfp/nn/resample.hpp"

namespace lfp::datagen {

namespace fs = std::filesystem;

namespace {

constexpr double kEps = 1.0 / 255.0;
constexpr double kLuma[3] = {0.299, 0.587, 0.114};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool coin(Rng& rng, double p) { return p > 0.0 && std::bernoulli_distribution(p)(rng); }

int odd_in_range(Rng& rng, int lo, int hi) {
  const int first = lo % 2 == 1 ? lo : lo + 1;
  const int last = hi % 2 == 1 ? hi : hi - 1;
  const int n = (last - first) / 2;
  return first + 2 * std::uniform_int_distribution<int>(0, n)(rng);
}

void require_odd(int k, const char* what) {
  if (k < 1 || k % 2 == 0) {
    throw ParameterError(std::string(what) + " must be odd and >= 1, got " + std::to_string(k));
  }
}

template <class Map>
Map resized(const Map& m, int h, int w) {
  const nn::Var v = nn::resize_bilinear(nn::Var::constant(m.tensor()), h, w);
  return Map::clipped(v.value());
}

bool has_support(const AlphaMatte& a) {
  const auto v = a.tensor().values();
  return std::any_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
}

}  // namespace

void AugmentConfig::validate() const {
  if (crop_sizes.empty()) throw ConfigError("datagen.crop_sizes must not be empty");
  for (int s : crop_sizes) {
    if (s < 2 || s % 2 != 0) throw ConfigError("datagen.crop_sizes must be positive and even");
  }
  if (kernel_min < 1 || kernel_max > 99 || kernel_min > kernel_max) {
    throw ConfigError("datagen kernel range must satisfy 1 <= min <= max <= 99");
  }
  if (kernel_min == kernel_max && kernel_min % 2 == 0) {
    throw ConfigError("datagen kernel range contains no odd size");
  }
  for (double p : {fg_to_unknown_prob, flip_prob, grayscale_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("datagen probabilities must lie in [0, 1]");
  }
  if (scale_min <= 0.0 || scale_min > scale_max || saturation_min < 0.0 ||
      saturation_min > saturation_max || gamma_min <= 0.0 || gamma_min > gamma_max ||
      contrast_min < 0.0 || contrast_min > contrast_max || rotation_max_deg < 0.0 ||
      shear_max_deg < 0.0 || shear_max_deg >= 90.0) {
    throw ConfigError("datagen augmentation ranges are invalid");
  }
}

std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& mask, int height, int width,
                                int kernel) {
  require_odd(kernel, "erosion kernel");
  const int r = kernel / 2;
  std::vector<std::uint8_t> rows(mask.size()), out(mask.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t v = 1;
      for (int d = -r; d <= r && v; ++d) {
        v = mask[static_cast<std::size_t>(y) * width + nn::reflect_index(x + d, width)];
      }
      rows[static_cast<std::size_t>(y) * width + x] = v;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t v = 1;
      for (int d = -r; d <= r && v; ++d) {
        v = rows[static_cast<std::size_t>(nn::reflect_index(y + d, height)) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = v;
    }
  }
  return out;
}

Trimap synth_trimap(const AlphaMatte& alpha, int erode_k, int dilate_k) {
  require_odd(erode_k, "erode kernel");
  require_odd(dilate_k, "dilate kernel");
  const int H = alpha.height(), W = alpha.width();
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(H) * W), bg(fg.size());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      fg[static_cast<std::size_t>(y) * W + x] = alpha(y, x) >= 1.0 - kEps;
      bg[static_cast<std::size_t>(y) * W + x] = alpha(y, x) <= kEps;
    }
  }
  fg = erode(fg, H, W, erode_k);
  bg = erode(bg, H, W, dilate_k);
  Trimap t(H, W, Label::Unknown);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      if (fg[i]) t(y, x) = Label::Foreground;
      else if (bg[i]) t(y, x) = Label::Background;
    }
  }
  return t;
}

Trimap fg_regions_to_unknown(const Trimap& t, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("relabel probability must lie in [0, 1]");
  const bool flip = std::bernoulli_distribution(p)(rng);
  if (!flip) return t;
  Trimap out = t;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (out(y, x) == Label::Foreground) out(y, x) = Label::Unknown;
    }
  }
  return out;
}

std::array<double, 4> AugmentParams::linear() const {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(shear_deg * std::numbers::pi / 180.0);
  const double c = std::cos(th), s = std::sin(th);
  const double f = flip ? -1.0 : 1.0;
  // R * Shear * scale * diag(f, 1)
  const double a = c * scale * f;
  const double b = (c * sh - s) * scale;
  const double cc = s * scale * f;
  const double d = (s * sh + c) * scale;
  return {a, b, cc, d};
}

AugmentParams draw_params(Rng& rng, const AugmentConfig& cfg) {
  AugmentParams p;
  for (;;) {
    p.rotation_deg = uniform(rng, -cfg.rotation_max_deg, cfg.rotation_max_deg);
    p.scale = uniform(rng, cfg.scale_min, cfg.scale_max);
    p.shear_deg = uniform(rng, -cfg.shear_max_deg, cfg.shear_max_deg);
    p.flip = coin(rng, cfg.flip_prob);
    const auto m = p.linear();
    if (std::abs(m[0] * m[3] - m[1] * m[2]) >= 1e-6) break;
  }
  p.saturation = uniform(rng, cfg.saturation_min, cfg.saturation_max);
  p.grayscale = coin(rng, cfg.grayscale_prob);
  p.gamma = uniform(rng, cfg.gamma_min, cfg.gamma_max);
  p.contrast = uniform(rng, cfg.contrast_min, cfg.contrast_max);
  return p;
}

FgAsset apply_affine(const FgAsset& a, const AugmentParams& p) {
  const auto m = p.linear();
  const double det = m[0] * m[3] - m[1] * m[2];
  if (std::abs(det) < 1e-6) throw ParameterError("degenerate affine transform");
  const double ia = m[3] / det, ib = -m[1] / det, ic = -m[2] / det, id = m[0] / det;
  const int H = a.alpha.height(), W = a.alpha.width();
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  FgAsset out{ColorMap(H, W), AlphaMatte(H, W)};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = ia * dx + ib * dy + cx;
      const double sy = ic * dx + id * dy + cy;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double tx = sx - x0, ty = sy - y0;
      double acc[4] = {0, 0, 0, 0};
      for (int k = 0; k < 4; ++k) {
        const int xx = x0 + (k & 1), yy = y0 + (k >> 1);
        const double w = ((k & 1) ? tx : 1.0 - tx) * ((k >> 1) ? ty : 1.0 - ty);
        if (w == 0.0) continue;
        // Colour extends from the border; coverage is zero outside.
        const int cx_ = std::clamp(xx, 0, W - 1), cy_ = std::clamp(yy, 0, H - 1);
        for (int c = 0; c < 3; ++c) acc[c] += w * a.fg.at(c, cy_, cx_);
        if (xx >= 0 && yy >= 0 && xx < W && yy < H) acc[3] += w * a.alpha(yy, xx);
      }
      for (int c = 0; c < 3; ++c) out.fg.at(c, y, x) = std::clamp(acc[c], 0.0, 1.0);
      out.alpha(y, x) = std::clamp(acc[3], 0.0, 1.0);
    }
  }
  return out;
}

namespace {

template <class F>
ColorMap per_pixel(const ColorMap& c, F&& f) {
  ColorMap out(c.height(), c.width());
  for (int y = 0; y < c.height(); ++y) {
    for (int x = 0; x < c.width(); ++x) {
      double px[3] = {c.at(0, y, x), c.at(1, y, x), c.at(2, y, x)};
      f(px);
      for (int k = 0; k < 3; ++k) out.at(k, y, x) = std::clamp(px[k], 0.0, 1.0);
    }
  }
  return out;
}

double luma(const double* px) { return kLuma[0] * px[0] + kLuma[1] * px[1] + kLuma[2] * px[2]; }

}  // namespace

ColorMap apply_saturation(const ColorMap& c, double s) {
  return per_pixel(c, [s](double* px) {
    const double g = luma(px);
    for (int k = 0; k < 3; ++k) px[k] = g + s * (px[k] - g);
  });
}

ColorMap apply_grayscale(const ColorMap& c) {
  return per_pixel(c, [](double* px) {
    const double g = luma(px);
    px[0] = px[1] = px[2] = g;
  });
}

ColorMap apply_gamma(const ColorMap& c, double g) {
  return per_pixel(c, [g](double* px) {
    for (int k = 0; k < 3; ++k) px[k] = std::pow(px[k], g);
  });
}

ColorMap apply_contrast(const ColorMap& c, double k) {
  return per_pixel(c, [k](double* px) {
    for (int i = 0; i < 3; ++i) px[i] = (px[i] - 0.5) * k + 0.5;
  });
}

FgAsset augment(const FgAsset& a, const AugmentParams& p) {
  require_same_size(a.fg.height(), a.fg.width(), a.alpha.height(), a.alpha.width(),
                    "foreground and alpha");
  FgAsset out = apply_affine(a, p);
  out.fg = apply_saturation(out.fg, p.saturation);
  if (p.grayscale) out.fg = apply_grayscale(out.fg);
  out.fg = apply_gamma(out.fg, p.gamma);
  out.fg = apply_contrast(out.fg, p.contrast);
  return out;
}

FgAsset augment(const FgAsset& a, Rng& rng, const AugmentConfig& cfg) {
  return augment(a, draw_params(rng, cfg));
}

TrainingSample make_training_sample(const FgAsset& fg, const BgAsset& bg, Rng& rng,
                                    const AugmentConfig& cfg) {
  cfg.validate();
  if (!has_support(fg.alpha)) throw DataError("foreground asset has an empty alpha support");
  TrainingSample ts;
  ts.meta.augment = draw_params(rng, cfg);
  FgAsset a = augment(fg, ts.meta.augment);
  if (!has_support(a.alpha)) {
    // The warp moved the whole object out of frame; keep the original.
    a = fg;
    ts.meta.augment = AugmentParams{};
  }

  const int s = cfg.crop_sizes[std::uniform_int_distribution<std::size_t>(
      0, cfg.crop_sizes.size() - 1)(rng)];
  int H = a.alpha.height(), W = a.alpha.width();
  if (H < s || W < s) {
    const double k = static_cast<double>(s) / std::min(H, W);
    H = std::max(s, static_cast<int>(std::ceil(H * k)));
    W = std::max(s, static_cast<int>(std::ceil(W * k)));
    a.fg = resized(a.fg, H, W);
    a.alpha = resized(a.alpha, H, W);
  }

  Image back = bg.image;
  const int need_h = std::max(H, 2 * s), need_w = std::max(W, 2 * s);
  if (back.height() < need_h || back.width() < need_w) {
    const double k = std::max(static_cast<double>(need_h) / back.height(),
                              static_cast<double>(need_w) / back.width());
    back = resized(back, std::max(need_h, static_cast<int>(std::ceil(back.height() * k))),
                   std::max(need_w, static_cast<int>(std::ceil(back.width() * k))));
  }
  const int by = std::uniform_int_distribution<int>(0, back.height() - H)(rng);
  const int bx = std::uniform_int_distribution<int>(0, back.width() - W)(rng);
  const ColorMap bg_scene = ColorMap::retag(crop_window(back, by, bx, H, W));
  const Image scene = composite(a.fg, bg_scene, a.alpha);

  ts.meta.erode_k = odd_in_range(rng, cfg.kernel_min, cfg.kernel_max);
  ts.meta.dilate_k = odd_in_range(rng, cfg.kernel_min, cfg.kernel_max);
  Trimap trimap = synth_trimap(a.alpha, ts.meta.erode_k, ts.meta.dilate_k);
  const Trimap relabeled = fg_regions_to_unknown(trimap, cfg.fg_to_unknown_prob, rng);
  ts.meta.fg_to_unknown = !(relabeled == trimap);
  trimap = relabeled;

  // Centre the inner window on a random unknown pixel when there is one.
  std::vector<int> unknown;
  for (int i = 0; i < H * W; ++i) {
    if (trimap.labels()[static_cast<std::size_t>(i)] == Label::Unknown) unknown.push_back(i);
  }
  int cy = H / 2, cx = W / 2;
  if (!unknown.empty()) {
    const int pick =
        unknown[std::uniform_int_distribution<std::size_t>(0, unknown.size() - 1)(rng)];
    cy = pick / W;
    cx = pick % W;
  }
  const int x0 = std::clamp(cx - s / 2, 0, W - s);
  const int y0 = std::clamp(cy - s / 2, 0, H - s);

  ts.inner.image = crop_window(scene, y0, x0, s, s);
  ts.inner.trimap = crop_window(trimap, y0, x0, s, s);
  ts.inner.alpha_gt = crop_window(a.alpha, y0, x0, s, s);
  ts.inner.fg_gt = crop_window(a.fg, y0, x0, s, s);
  ts.inner.bg_gt = crop_window(bg_scene, y0, x0, s, s);

  const PatchGeometry g = make_patch_geometry(x0, y0, s, H, W);
  ts.context.geometry = g;
  ts.context.image =
      crop_padded(scene, g.context_y, g.context_x, g.context_side, g.context_side, PadMode::Reflect);
  ts.context.trimap = crop_padded(trimap, g.context_y, g.context_x, g.context_side,
                                  g.context_side, PadMode::Reflect);
  ts.context_alpha_gt = crop_padded(a.alpha, g.context_y, g.context_x, g.context_side,
                                    g.context_side, PadMode::Reflect);

  ts.meta.crop_size = s;
  ts.meta.inner_x = x0;
  ts.meta.inner_y = y0;
  ts.meta.scene_height = H;
  ts.meta.scene_width = W;
  ts.meta.geometry = g;
  return ts;
}

FgAsset procedural_fg(Rng& rng, int height, int width) {
  FgAsset a{ColorMap(height, width), AlphaMatte(height, width)};
  const int blobs = std::uniform_int_distribution<int>(1, 3)(rng);
  const double side = std::min(height, width);
  struct Ellipse {
    double cx, cy, rx, ry, c, s, soft;
  };
  std::vector<Ellipse> es;
  for (int i = 0; i < blobs; ++i) {
    const double th = uniform(rng, 0.0, std::numbers::pi);
    es.push_back({uniform(rng, 0.3, 0.7) * width, uniform(rng, 0.3, 0.7) * height,
                  uniform(rng, 0.12, 0.3) * side, uniform(rng, 0.12, 0.3) * side, std::cos(th),
                  std::sin(th), uniform(rng, 1.5, 6.0)});
  }
  double c0[3], c1[3];
  for (int k = 0; k < 3; ++k) {
    c0[k] = uniform(rng, 0.05, 0.95);
    c1[k] = uniform(rng, 0.05, 0.95);
  }
  const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double freq = uniform(rng, 0.05, 0.25), phase = uniform(rng, 0.0, 6.28);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double alpha = 0.0;
      for (const auto& e : es) {
        const double dx = x - e.cx, dy = y - e.cy;
        const double u = (e.c * dx + e.s * dy) / e.rx, v = (-e.s * dx + e.c * dy) / e.ry;
        const double sd = (std::sqrt(u * u + v * v) - 1.0) * std::min(e.rx, e.ry);
        alpha = std::max(alpha, std::clamp(0.5 - sd / e.soft, 0.0, 1.0));
      }
      a.alpha(y, x) = alpha;
      const double t = 0.5 + 0.5 * std::sin((std::cos(dir) * x + std::sin(dir) * y) / side * 3.0);
      const double tex = 0.08 * std::sin(freq * (x + y) + phase);
      for (int k = 0; k < 3; ++k) {
        a.fg.at(k, y, x) = std::clamp(c0[k] * (1.0 - t) + c1[k] * t + tex, 0.0, 1.0);
      }
    }
  }
  return a;
}

BgAsset procedural_bg(Rng& rng, int height, int width) {
  BgAsset b{Image(height, width)};
  double base[3], gx[3], gy[3];
  for (int k = 0; k < 3; ++k) {
    base[k] = uniform(rng, 0.2, 0.8);
    gx[k] = uniform(rng, -0.3, 0.3);
    gy[k] = uniform(rng, -0.3, 0.3);
  }
  struct Wave {
    double fx, fy, ph, amp[3];
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    w.fx = uniform(rng, -0.15, 0.15);
    w.fy = uniform(rng, -0.15, 0.15);
    w.ph = uniform(rng, 0.0, 6.28);
    for (double& amp : w.amp) amp = uniform(rng, 0.0, 0.12);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width - 0.5, v = static_cast<double>(y) / height - 0.5;
      for (int k = 0; k < 3; ++k) {
        double c = base[k] + gx[k] * u + gy[k] * v;
        for (const auto& w : waves) c += w.amp[k] * std::sin(w.fx * x + w.fy * y + w.ph);
        b.image.at(k, y, x) = std::clamp(c, 0.0, 1.0);
      }
    }
  }
  return b;
}

AssetSet procedural_assets(std::uint64_t seed, int count_fg, int count_bg, int side) {
  AssetSet s;
  Rng rng(seed);
  for (int i = 0; i < count_fg; ++i) {
    s.fg.push_back(procedural_fg(rng, side, side));
    s.fg_names.push_back("procedural_" + std::to_string(i));
  }
  for (int i = 0; i < count_bg; ++i) s.bg.push_back(procedural_bg(rng, 2 * side, 2 * side));
  return s;
}

AssetSet load_asset_folder(const std::string& dir) {
  const fs::path root(dir);
  AssetSet s;
  std::vector<std::pair<std::string, std::string>> pairs;
  const fs::path manifest = root / "manifest.txt";
  if (fs::exists(manifest)) {
    std::istringstream in(io::read_text(manifest.string()));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string f, a;
      if (!(ls >> f >> a)) throw DataError("malformed manifest line: " + line);
      pairs.emplace_back((root / f).string(), (root / a).string());
    }
  } else {
    for (const auto& f : io::list_images((root / "fg").string())) {
      const std::string stem = fs::path(f).stem().string();
      std::string match;
      for (const auto& a : io::list_images((root / "alpha").string())) {
        if (fs::path(a).stem().string() == stem) match = a;
      }
      if (match.empty()) throw DataError("no alpha matte for foreground " + f);
      pairs.emplace_back(f, match);
    }
  }
  for (const auto& [f, a] : pairs) {
    FgAsset asset{io::read_color(f), io::read_alpha(a)};
    require_same_size(asset.fg.height(), asset.fg.width(), asset.alpha.height(),
                      asset.alpha.width(), "foreground and alpha");
    s.fg.push_back(std::move(asset));
    s.fg_names.push_back(fs::path(f).stem().string());
  }
  for (const auto& b : io::list_images((root / "bg").string())) {
    s.bg.push_back({io::read_image(b)});
  }
  if (s.fg.empty() || s.bg.empty()) throw DataError("dataset " + dir + " has no fg or bg images");
  return s;
}

Rng sample_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

TrainingSample generate_sample(const AssetSet& assets, const AugmentConfig& cfg,
                               std::uint64_t seed, std::uint64_t index) {
  if (assets.fg.empty() || assets.bg.empty()) throw DataError("asset set is empty");
  Rng rng = sample_rng(seed, index);
  const FgAsset& fg = assets.fg[index % assets.fg.size()];
  const BgAsset& bg =
      assets.bg[std::uniform_int_distribution<std::size_t>(0, assets.bg.size() - 1)(rng)];
  return make_training_sample(fg, bg, rng, cfg);
}

SampleStream::SampleStream(const AssetSet& assets, AugmentConfig cfg, std::uint64_t seed,
                           unsigned workers, std::size_t capacity, std::uint64_t count)
    : assets_(assets),
      cfg_(std::move(cfg)),
      seed_(seed),
      count_(count),
      capacity_(std::max<std::size_t>(1, capacity)),
      workers_(std::max(1u, workers)) {
  cfg_.validate();
  for (unsigned w = 0; w < workers_; ++w) threads_.emplace_back([this, w] { work(w); });
}

SampleStream::~SampleStream() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void SampleStream::work(unsigned id) {
  for (std::uint64_t i = id; i < count_; i += workers_) {
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return stop_ || i < consumed_ + capacity_; });
      if (stop_) return;
    }
    TrainingSample s;
    std::string err;
    try {
      s = generate_sample(assets_, cfg_, seed_, i);
    } catch (const std::exception& e) {
      err = e.what();
    }
    {
      std::lock_guard lock(mutex_);
      if (!err.empty() && error_.empty()) error_ = err;
      ready_.emplace(i, std::move(s));
    }
    cv_.notify_all();
  }
}

bool SampleStream::next(TrainingSample& out) {
  std::unique_lock lock(mutex_);
  if (consumed_ >= count_) return false;
  cv_.wait(lock, [&] { return ready_.count(consumed_) > 0; });
  if (!error_.empty()) throw DataError("sample generation failed: " + error_);
  auto it = ready_.find(consumed_);
  out = std::move(it->second);
  ready_.erase(it);
  ++consumed_;
  lock.unlock();
  cv_.notify_all();
  return true;
}

}  // namespace lfp::datagen
