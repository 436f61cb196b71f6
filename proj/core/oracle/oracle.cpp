#include "lfp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lfp::oracle {

namespace {

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

bool is_unknown(const Trimap& t, int y, int x) { return t(y, x) == Label::Unknown; }

double region_l1(const Tensor& a, const Tensor& b, const Trimap& t, bool (*in)(Label)) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (!in(t(y, x))) continue;
      ++n;
      for (int c = 0; c < a.channels(); ++c) s += std::abs(a.at(c, y, x) - b.at(c, y, x));
    }
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

bool in_u(Label l) { return l == Label::Unknown; }
bool in_fu(Label l) { return l != Label::Background; }
bool in_bu(Label l) { return l != Label::Foreground; }
bool in_all(Label) { return true; }

Tensor dense_down(const Tensor& x) {
  const int H = x.height(), W = x.width();
  const int h = (H + 1) / 2, w = (W + 1) / 2;
  Tensor out = Tensor::chw(x.channels(), h, w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < h; ++oy) {
      for (int ox = 0; ox < w; ++ox) {
        double acc = 0.0, norm = 0.0;
        for (int a = 0; a < 5; ++a) {
          for (int b = 0; b < 5; ++b) {
            const double k = kBinomial[a] * kBinomial[b];
            acc += k * x.at(c, mirror(2 * oy + a - 2, H), mirror(2 * ox + b - 2, W));
            norm += k;
          }
        }
        out.at(c, oy, ox) = acc / norm;
      }
    }
  }
  return out;
}

// Zero-insertion upsample: only even positions of the mirrored fine grid
// carry coarse samples.
Tensor dense_up(const Tensor& x, int H, int W) {
  Tensor out = Tensor::chw(x.channels(), H, W);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        double acc = 0.0, norm = 0.0;
        for (int a = 0; a < 5; ++a) {
          const int zy = mirror(y + a - 2, H);
          if (zy % 2 != 0) continue;
          for (int b = 0; b < 5; ++b) {
            const int zx = mirror(xx + b - 2, W);
            if (zx % 2 != 0) continue;
            const double k = 4.0 * kBinomial[a] * kBinomial[b];
            acc += k * x.at(c, zy / 2, zx / 2);
            norm += k;
          }
        }
        out.at(c, y, xx) = acc / norm;
      }
    }
  }
  return out;
}

Tensor masked_copy(const Tensor& x, const Trimap& t) {
  Tensor out = x;
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < x.height(); ++y) {
      for (int xx = 0; xx < x.width(); ++xx) {
        if (!is_unknown(t, y, xx)) out.at(c, y, xx) = 0.0;
      }
    }
  }
  return out;
}

double lap_region(const Tensor& x, const Tensor& y, const Trimap& t, int levels, bool full) {
  if (full) return dense_laplacian_loss(x, y, levels);
  return dense_laplacian_loss(masked_copy(x, t), masked_copy(y, t), levels);
}

// Separable filtering with clamped borders; axis 0 filters along x.
std::vector<double> filter_axis(const std::vector<double>& in, int H, int W,
                                const std::vector<double>& k, int axis) {
  const int h = static_cast<int>(k.size()) / 2;
  std::vector<double> out(in.size(), 0.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = 0; i < static_cast<int>(k.size()); ++i) {
        const int yy = axis == 1 ? std::clamp(y + i - h, 0, H - 1) : y;
        const int xx = axis == 0 ? std::clamp(x + i - h, 0, W - 1) : x;
        acc += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(yy) * W + xx];
      }
      out[static_cast<std::size_t>(y) * W + x] = acc;
    }
  }
  return out;
}

std::vector<double> grad_mag(const AlphaMatte& a, double sigma) {
  const double h = std::ceil(
      sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * sigma * 0.01)));
  const int hs = static_cast<int>(h);
  std::vector<double> g, dg;
  for (int i = -hs; i <= hs; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    g.push_back(v);
    dg.push_back(-i * v / (sigma * sigma));
  }
  double sg = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    sg += g[i] * g[i];
    sd += dg[i] * dg[i];
  }
  const double norm = std::sqrt(sg * sd);
  for (double& v : dg) v /= norm;
  const int H = a.height(), W = a.width();
  std::vector<double> src(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) src[static_cast<std::size_t>(y) * W + x] = a(y, x);
  }
  const auto gx = filter_axis(filter_axis(src, H, W, dg, 0), H, W, g, 1);
  const auto gy = filter_axis(filter_axis(src, H, W, dg, 1), H, W, g, 0);
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(gx[i], gy[i]);
  return out;
}

// Components by repeated min-label sweeps; returns the mask of the largest,
// ties broken by the smallest raster index among the tied components.
std::vector<std::uint8_t> largest_by_propagation(const std::vector<std::uint8_t>& m, int H, int W) {
  const int none = std::numeric_limits<int>::max();
  std::vector<int> lab(m.size(), none);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) lab[i] = static_cast<int>(i);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (!m[i]) continue;
        int best = lab[i];
        if (y > 0 && m[i - W]) best = std::min(best, lab[i - W]);
        if (y + 1 < H && m[i + W]) best = std::min(best, lab[i + W]);
        if (x > 0 && m[i - 1]) best = std::min(best, lab[i - 1]);
        if (x + 1 < W && m[i + 1]) best = std::min(best, lab[i + 1]);
        if (best < lab[i]) {
          lab[i] = best;
          changed = true;
        }
      }
    }
  }
  // The label of a component is its first raster pixel.
  std::vector<std::size_t> size(m.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) ++size[static_cast<std::size_t>(lab[i])];
  }
  std::size_t best_size = 0;
  int best = none;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (size[i] > best_size) {
      best_size = size[i];
      best = static_cast<int>(i);
    }
  }
  std::vector<std::uint8_t> out(m.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] && lab[i] == best;
  return out;
}

}  // namespace

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

std::vector<double> brute_distance(const Trimap& t, Label target) {
  const int H = t.height(), W = t.width();
  std::vector<std::pair<int, int>> sites;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (t(y, x) == target) sites.emplace_back(y, x);
    }
  }
  std::vector<double> d(static_cast<std::size_t>(H) * W, std::numeric_limits<double>::infinity());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [sy, sx] : sites) {
        const double dy = y - sy, dx = x - sx;
        best = std::min(best, dy * dy + dx * dx);
      }
      d[static_cast<std::size_t>(y) * W + x] = std::sqrt(best);
    }
  }
  return d;
}

Trimap min_filter_trimap(const AlphaMatte& alpha, int erode_k, int dilate_k) {
  const double eps = 1.0 / 255.0;
  const int H = alpha.height(), W = alpha.width();
  auto all_within = [&](int y, int x, int k, bool fg) {
    const int r = k / 2;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const double a = alpha(mirror(y + dy, H), mirror(x + dx, W));
        if (fg ? a < 1.0 - eps : a > eps) return false;
      }
    }
    return true;
  };
  Trimap t(H, W, Label::Unknown);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (all_within(y, x, erode_k, true)) t(y, x) = Label::Foreground;
      else if (all_within(y, x, dilate_k, false)) t(y, x) = Label::Background;
    }
  }
  return t;
}

Tensor block_mean(const Tensor& f, int grid) {
  const int H = f.height(), W = f.width();
  auto edge = [grid](int k, int n) { return (2 * k * n + grid) / (2 * grid); };
  Tensor out = Tensor::chw(f.channels(), grid, grid);
  for (int c = 0; c < f.channels(); ++c) {
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        double s = 0.0;
        int n = 0;
        for (int y = edge(i, H); y < edge(i + 1, H); ++y) {
          for (int x = edge(j, W); x < edge(j + 1, W); ++x) {
            s += f.at(c, y, x);
            ++n;
          }
        }
        out.at(c, i, j) = s / n;
      }
    }
  }
  return out;
}

std::vector<Tensor> dense_laplacian_pyramid(const Tensor& x, int levels) {
  std::vector<Tensor> out;
  Tensor cur = x;
  for (int j = 0; j < levels; ++j) {
    Tensor down = dense_down(cur);
    const Tensor up = dense_up(down, cur.height(), cur.width());
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] -= up[i];
    out.push_back(std::move(cur));
    cur = std::move(down);
  }
  out.push_back(std::move(cur));
  return out;
}

std::vector<double> dense_laplacian_terms(const Tensor& x, const Tensor& y, int levels) {
  const auto px = dense_laplacian_pyramid(x, levels);
  const auto py = dense_laplacian_pyramid(y, levels);
  std::vector<double> terms;
  for (int j = 0; j <= levels; ++j) {
    const Tensor& a = px[static_cast<std::size_t>(j)];
    const Tensor& b = py[static_cast<std::size_t>(j)];
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    terms.push_back(std::pow(2.0, j) * s / static_cast<double>(a.size()));
  }
  return terms;
}

double dense_laplacian_loss(const Tensor& x, const Tensor& y, int levels) {
  double s = 0.0;
  for (double v : dense_laplacian_terms(x, y, levels)) s += v;
  return s;
}

double propagating_loss(const Tensor& c, const Tensor& c_gt, const Trimap& t) {
  return region_l1(c, c_gt, t, in_u);
}

double weighted_alpha_loss(const Tensor& alpha, const Tensor& alpha_gt, const Trimap& t,
                           double gamma) {
  const double n = static_cast<double>(t.count(Label::Unknown));
  const double w = std::max(1.0, std::sqrt(n / gamma));
  return w * region_l1(alpha, alpha_gt, t, in_u);
}

double composite_loss(const Tensor& alpha, const Sample& s, bool unknown_only) {
  const Tensor& f = s.fg_gt.tensor();
  const Tensor& b = s.bg_gt.tensor();
  Tensor comp = f;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < f.height(); ++y) {
      for (int x = 0; x < f.width(); ++x) {
        const double a = alpha.at(0, y, x);
        comp.at(c, y, x) = a * f.at(c, y, x) + (1.0 - a) * b.at(c, y, x);
      }
    }
  }
  return region_l1(comp, s.image.tensor(), s.trimap, unknown_only ? in_u : in_all);
}

double fb_reconstruction_loss(const Tensor& fg, const Tensor& bg, const Sample& s) {
  return region_l1(fg, s.fg_gt.tensor(), s.trimap, in_fu) +
         region_l1(bg, s.bg_gt.tensor(), s.trimap, in_bu);
}

double fb_composite_loss(const Tensor& fg, const Tensor& bg, const Sample& s, bool unknown_only) {
  Tensor comp = fg;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < fg.height(); ++y) {
      for (int x = 0; x < fg.width(); ++x) {
        const double a = s.alpha_gt(y, x);
        comp.at(c, y, x) = a * fg.at(c, y, x) + (1.0 - a) * bg.at(c, y, x);
      }
    }
  }
  return region_l1(comp, s.image.tensor(), s.trimap, unknown_only ? in_u : in_all);
}

double fb_laplacian_loss(const Tensor& fg, const Tensor& bg, const Sample& s, int levels) {
  return dense_laplacian_loss(fg, s.fg_gt.tensor(), levels) +
         dense_laplacian_loss(bg, s.bg_gt.tensor(), levels);
}

double matting_loss(const Tensor& alpha, const Tensor& fg, const Tensor& bg, const Sample& s,
                    const losses::LossConfig& cfg) {
  const bool full = cfg.laplacian_full_patch;
  const int J = cfg.pyramid_levels;
  const double la = weighted_alpha_loss(alpha, s.alpha_gt.tensor(), s.trimap, cfg.gamma) +
                    composite_loss(alpha, s, cfg.composite_unknown_only) +
                    lap_region(alpha, s.alpha_gt.tensor(), s.trimap, J, full);
  const double lfb = fb_reconstruction_loss(fg, bg, s) +
                     fb_composite_loss(fg, bg, s, cfg.composite_unknown_only) +
                     lap_region(fg, s.fg_gt.tensor(), s.trimap, J, full) +
                     lap_region(bg, s.bg_gt.tensor(), s.trimap, J, full);
  return cfg.lambda_alpha * la + cfg.lambda_fb * lfb;
}

double sad(const AlphaMatte& p, const AlphaMatte& g, const Trimap& t) {
  double s = 0.0;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (is_unknown(t, y, x)) s += std::abs(p(y, x) - g(y, x));
    }
  }
  return s / 1000.0;
}

double mse(const AlphaMatte& p, const AlphaMatte& g, const Trimap& t) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (!is_unknown(t, y, x)) continue;
      s += (p(y, x) - g(y, x)) * (p(y, x) - g(y, x));
      ++n;
    }
  }
  return n == 0 ? 0.0 : 1000.0 * s / static_cast<double>(n);
}

double grad_error(const AlphaMatte& pred, const AlphaMatte& g, const Trimap& t, double sigma) {
  AlphaMatte p = g;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (is_unknown(t, y, x)) p(y, x) = pred(y, x);
    }
  }
  const auto gp = grad_mag(p, sigma);
  const auto gg = grad_mag(g, sigma);
  double s = 0.0;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * t.width() + x;
      if (is_unknown(t, y, x)) s += (gp[i] - gg[i]) * (gp[i] - gg[i]);
    }
  }
  return s / 1000.0;
}

double conn_error(const AlphaMatte& pred, const AlphaMatte& g, const Trimap& t, double step) {
  const int H = g.height(), W = g.width();
  AlphaMatte p = g;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (is_unknown(t, y, x)) p(y, x) = pred(y, x);
    }
  }
  const std::size_t n = static_cast<std::size_t>(H) * W;
  const int steps = static_cast<int>(std::lround(1.0 / step));
  // Level at which each pixel first drops out of the largest joint component.
  std::vector<double> level(n, 1.0);
  std::vector<std::uint8_t> settled(n, 0);
  for (int k = 1; k <= steps; ++k) {
    const double th = k * step;
    std::vector<std::uint8_t> m(n);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        m[static_cast<std::size_t>(y) * W + x] = p(y, x) >= th && g(y, x) >= th;
      }
    }
    const auto omega = largest_by_propagation(m, H, W);
    for (std::size_t i = 0; i < n; ++i) {
      if (!settled[i] && !omega[i]) {
        level[i] = (k - 1) * step;
        settled[i] = 1;
      }
    }
  }
  double s = 0.0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!is_unknown(t, y, x)) continue;
      const double l = level[static_cast<std::size_t>(y) * W + x];
      const double dp = p(y, x) - l, dg = g(y, x) - l;
      const double phip = dp >= 0.15 ? 1.0 - dp : 1.0;
      const double phig = dg >= 0.15 ? 1.0 - dg : 1.0;
      s += std::abs(phip - phig);
    }
  }
  return s / 1000.0;
}

namespace {

void accumulate(GradCheck& r, double a, double n, double floor) {
  const double err = std::abs(a - n);
  r.max_abs_error = std::max(r.max_abs_error, err);
  r.max_rel_error = std::max(r.max_rel_error, err / std::max({std::abs(a), std::abs(n), floor}));
  ++r.entries;
}

}  // namespace

GradCheck finite_difference_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h,
                                  double floor, std::size_t stride) {
  std::vector<nn::Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(nn::Var::leaf(t, true));
  nn::Var out = f(leaves);
  nn::backward(out);
  std::vector<Tensor> analytic;
  for (const auto& l : leaves) {
    analytic.push_back(l.grad().empty() ? Tensor(l.value().shape(), 0.0) : l.grad());
  }

  auto eval = [&](const std::vector<Tensor>& xs) {
    std::vector<nn::Var> cs;
    for (const Tensor& t : xs) cs.push_back(nn::Var::constant(t));
    return f(cs).value().item();
  };

  GradCheck r;
  std::vector<Tensor> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].size(); i += std::max<std::size_t>(stride, 1)) {
      const double v = xs[k][i];
      xs[k][i] = v + h;
      const double fp = eval(xs);
      xs[k][i] = v - h;
      const double fm = eval(xs);
      xs[k][i] = v;
      accumulate(r, analytic[k][i], (fp - fm) / (2.0 * h), floor);
    }
  }
  return r;
}

GradCheck finite_difference_check_leaves(const std::function<nn::Var()>& f,
                                         std::vector<nn::Var> leaves, std::size_t per_leaf,
                                         double h, double floor) {
  for (auto& l : leaves) l.zero_grad();
  const nn::Var root = f();
  const double f0 = root.value().item();
  nn::backward(root);
  std::vector<Tensor> analytic;
  for (const auto& l : leaves) {
    analytic.push_back(l.grad().empty() ? Tensor(l.value().shape(), 0.0) : l.grad());
  }
  auto rel = [floor](double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
  };
  GradCheck r;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensor& v = leaves[k].mutable_value();
    const std::size_t n = v.size();
    const std::size_t count = std::min(per_leaf == 0 ? n : per_leaf, n);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t i = count == 1 ? 0 : j * (n - 1) / (count - 1);
      const double orig = v[i];
      v[i] = orig + h;
      const double fp = f().value().item();
      v[i] = orig - h;
      const double fm = f().value().item();
      v[i] = orig;
      const double a = analytic[k][i];
      double num = (fp - fm) / (2.0 * h);
      for (double side : {(fp - f0) / h, (f0 - fm) / h}) {
        if (rel(a, side) < rel(a, num) && rel(a, num) > 1e-4) {
          num = side;
          ++r.one_sided;
        }
      }
      accumulate(r, a, num, floor);
    }
  }
  for (auto& l : leaves) l.zero_grad();
  return r;
}

Tensor box_blur3(const Tensor& x) {
  Tensor out = x;
  const int H = x.height(), W = x.width();
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) s += x.at(c, mirror(y + dy, H), mirror(xx + dx, W));
        }
        out.at(c, y, xx) = s / 9.0;
      }
    }
  }
  return out;
}

}  // namespace lfp::oracle
