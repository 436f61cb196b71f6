#include "lfp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lfp::metrics {

namespace {

void check(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t) {
  require_same_size(pred.height(), pred.width(), gt.height(), gt.width(), "prediction and truth");
  require_same_size(pred.height(), pred.width(), t.height(), t.width(), "matte and trimap");
}

template <class F>
double sum_unknown(const Trimap& t, F&& f) {
  double s = 0.0;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (t(y, x) == Label::Unknown) s += f(y, x);
    }
  }
  return s;
}

double gauss(double x, double sigma) {
  return std::exp(-x * x / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double dgauss(double x, double sigma) { return -x * gauss(x, sigma) / (sigma * sigma); }

}  // namespace

double sad(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t) {
  check(pred, gt, t);
  return sum_unknown(t, [&](int y, int x) { return std::abs(pred(y, x) - gt(y, x)); }) / 1000.0;
}

double mse(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t) {
  check(pred, gt, t);
  const std::size_t n = t.count(Label::Unknown);
  if (n == 0) return 0.0;
  const double s = sum_unknown(t, [&](int y, int x) {
    const double d = pred(y, x) - gt(y, x);
    return d * d;
  });
  return s / static_cast<double>(n) * 1000.0;
}

std::vector<double> gaussian_derivative_kernel(double sigma, int* halfsize) {
  const double eps = 1e-2;
  const int h = static_cast<int>(
      std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * sigma * eps))));
  const int size = 2 * h + 1;
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  double norm = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double v = gauss(i - h, sigma) * dgauss(j - h, sigma);
      k[static_cast<std::size_t>(i) * size + j] = v;
      norm += v * v;
    }
  }
  norm = std::sqrt(norm);
  for (double& v : k) v /= norm;
  if (halfsize) *halfsize = h;
  return k;
}

std::vector<double> gradient_magnitude(const AlphaMatte& a, double sigma) {
  int h = 0;
  const std::vector<double> k = gaussian_derivative_kernel(sigma, &h);
  const int size = 2 * h + 1;
  const int H = a.height(), W = a.width();
  std::vector<double> out(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          const double kv = k[static_cast<std::size_t>(i) * size + j];
          // x derivative uses the kernel as is, y derivative its transpose.
          gx += kv * a(std::clamp(y + i - h, 0, H - 1), std::clamp(x + j - h, 0, W - 1));
          gy += kv * a(std::clamp(y + j - h, 0, H - 1), std::clamp(x + i - h, 0, W - 1));
        }
      }
      out[static_cast<std::size_t>(y) * W + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

namespace {

// Prediction with every known pixel taken from the ground truth, so that
// neighbourhood metrics only see unknown-region predictions.
AlphaMatte unknown_only(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t) {
  AlphaMatte out = gt;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (t(y, x) == Label::Unknown) out(y, x) = pred(y, x);
    }
  }
  return out;
}

}  // namespace

double grad_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t, double sigma) {
  check(pred, gt, t);
  const std::vector<double> gp = gradient_magnitude(unknown_only(pred, gt, t), sigma);
  const std::vector<double> gg = gradient_magnitude(gt, sigma);
  const int W = t.width();
  return sum_unknown(t, [&](int y, int x) {
           const std::size_t i = static_cast<std::size_t>(y) * W + x;
           const double d = gp[i] - gg[i];
           return d * d;
         }) /
         1000.0;
}

std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& mask, int height,
                                            int width) {
  std::vector<int> label(mask.size(), 0);
  std::vector<int> stack;
  int best = 0;
  std::size_t best_size = 0;
  int next = 0;
  for (std::size_t s = 0; s < mask.size(); ++s) {
    if (!mask[s] || label[s]) continue;
    ++next;
    std::size_t size = 0;
    label[s] = next;
    stack.push_back(static_cast<int>(s));
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int y = p / width, x = p % width;
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= height || n[1] < 0 || n[1] >= width) continue;
        const int q = n[0] * width + n[1];
        if (mask[static_cast<std::size_t>(q)] && !label[static_cast<std::size_t>(q)]) {
          label[static_cast<std::size_t>(q)] = next;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
  }
  std::vector<std::uint8_t> out(mask.size(), 0);
  if (best == 0) return out;
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = label[i] == best;
  return out;
}

std::vector<double> connectivity_levels(const AlphaMatte& pred, const AlphaMatte& gt, double step) {
  const int H = gt.height(), W = gt.width();
  const std::size_t n = static_cast<std::size_t>(H) * W;
  const int steps = static_cast<int>(std::lround(1.0 / step));
  std::vector<double> l(n, -1.0);
  std::vector<std::uint8_t> both(n);
  for (int k = 1; k <= steps; ++k) {
    const double th = k * step;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        both[static_cast<std::size_t>(y) * W + x] = pred(y, x) >= th && gt(y, x) >= th;
      }
    }
    const std::vector<std::uint8_t> omega = largest_component(both, H, W);
    for (std::size_t i = 0; i < n; ++i) {
      if (l[i] == -1.0 && !omega[i]) l[i] = (k - 1) * step;
    }
  }
  for (double& v : l) {
    if (v == -1.0) v = 1.0;
  }
  return l;
}

double conn_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t, double step) {
  check(pred, gt, t);
  const std::vector<double> l = connectivity_levels(unknown_only(pred, gt, t), gt, step);
  const int W = t.width();
  auto phi = [](double a, double lv) {
    const double d = a - lv;
    return 1.0 - d * (d >= 0.15 ? 1.0 : 0.0);
  };
  return sum_unknown(t, [&](int y, int x) {
           const double lv = l[static_cast<std::size_t>(y) * W + x];
           return std::abs(phi(pred(y, x), lv) - phi(gt(y, x), lv));
         }) /
         1000.0;
}

MetricReport evaluate(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t) {
  MetricReport r;
  r.unknown_pixels = t.count(Label::Unknown);
  r.empty_region = r.unknown_pixels == 0;
  r.sad = sad(pred, gt, t);
  r.mse = mse(pred, gt, t);
  r.grad = grad_error(pred, gt, t);
  r.conn = conn_error(pred, gt, t);
  r.sad_raw = r.sad * 1000.0;
  r.mse_raw = r.mse / 1000.0;
  r.grad_raw = r.grad * 1000.0;
  r.conn_raw = r.conn * 1000.0;
  return r;
}

}  // namespace lfp::metrics
