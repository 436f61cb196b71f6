#pragma once

// Random inputs shared by the unit, property and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>

#include "lfp/core.hpp"
#include "lfp/datagen.hpp"
#include "lfp/geometry.hpp"

namespace lfp::testing {

using nn::Tensor;
using Rng = std::mt19937_64;

inline double uni(Rng& r, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(r);
}

inline int uni_int(Rng& r, int a, int b) { return std::uniform_int_distribution<int>(a, b)(r); }

inline Tensor random_tensor(Rng& r, int c, int h, int w, double lo = 0.0, double hi = 1.0) {
  Tensor t = Tensor::chw(c, h, w);
  for (double& v : t.values()) v = uni(r, lo, hi);
  return t;
}

// Every label present at least once.
inline Trimap random_trimap(Rng& r, int h, int w, double p_unknown = 0.5) {
  Trimap t(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = uni(r, 0, 1);
      t(y, x) = u < p_unknown ? Label::Unknown
                              : (u < p_unknown + (1 - p_unknown) / 2 ? Label::Foreground
                                                                     : Label::Background);
    }
  }
  if (h * w >= 3) {
    t(0, 0) = Label::Unknown;
    t(h > 1 ? 1 : 0, h > 1 ? 0 : 1) = Label::Background;
    t(h - 1, w - 1) = Label::Foreground;
  }
  return t;
}

inline AlphaMatte random_alpha(Rng& r, int h, int w) {
  return AlphaMatte::from_tensor(random_tensor(r, 1, h, w));
}

// Soft discs with exact 0 and 1 plateaus.
inline AlphaMatte blob_matte(Rng& r, int h, int w, int blobs) {
  AlphaMatte a(h, w, 0.0);
  for (int b = 0; b < blobs; ++b) {
    const double cy = uni(r, 0, h), cx = uni(r, 0, w), rad = uni(r, 2, 0.4 * std::min(h, w));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = std::clamp((rad - std::hypot(y - cy, x - cx)) / 3.0, 0.0, 1.0);
        a(y, x) = std::max(a(y, x), v);
      }
    }
  }
  return a;
}

// Image is the exact composite plus noise so the composite losses are nonzero.
inline Sample random_sample(Rng& r, int h, int w, double noise = 0.1) {
  Sample s;
  s.trimap = random_trimap(r, h, w);
  s.alpha_gt = random_alpha(r, h, w);
  s.fg_gt = ColorMap::from_tensor(random_tensor(r, 3, h, w));
  s.bg_gt = ColorMap::from_tensor(random_tensor(r, 3, h, w));
  Tensor img = composite(s.fg_gt, s.bg_gt, s.alpha_gt).tensor();
  for (double& v : img.values()) v += uni(r, -noise, noise);
  s.image = Image::clipped(std::move(img));
  return s;
}

inline datagen::TrainingSample random_training_sample(Rng& r, int s) {
  datagen::TrainingSample ts;
  ts.inner = random_sample(r, s, s);
  ts.context.image = Image::from_tensor(random_tensor(r, 3, 2 * s, 2 * s));
  ts.context.trimap = random_trimap(r, 2 * s, 2 * s);
  ts.context.geometry = make_patch_geometry(s / 2, s / 2, s, 2 * s, 2 * s);
  ts.context_alpha_gt = random_alpha(r, 2 * s, 2 * s);
  return ts;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace lfp::testing
