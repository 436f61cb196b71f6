#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "app.hpp"
#include "lfp/analysis.hpp"
#include "lfp/cspp.hpp"
#include "lfp/datagen.hpp"
#include "lfp/inference.hpp"
#include "lfp/metrics.hpp"
#include "lfp/oracle.hpp"
#include "lfp/parallel.hpp"
#include "lfp/training.hpp"

namespace lfp::app {

namespace {

using nn::Tensor;
using nn::Var;
using Rng = std::mt19937_64;

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

std::string json_string(const std::string& s) {
  std::string o = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') o += '\\';
    o += c;
  }
  return o + "\"";
}

double uni(Rng& r, double a, double b) { return std::uniform_real_distribution<double>(a, b)(r); }

Tensor random_tensor(Rng& r, int c, int h, int w, double lo, double hi) {
  Tensor t = Tensor::chw(c, h, w);
  for (double& v : t.values()) v = uni(r, lo, hi);
  return t;
}

Trimap random_trimap(Rng& r, int h, int w, double p_unknown = 0.5) {
  Trimap t(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = uni(r, 0, 1);
      t(y, x) = u < p_unknown ? Label::Unknown
                              : (u < p_unknown + (1 - p_unknown) / 2 ? Label::Foreground
                                                                     : Label::Background);
    }
  }
  t(0, 0) = Label::Unknown;
  t(0, 1) = Label::Foreground;
  t(1, 0) = Label::Background;
  return t;
}

// Soft blobs with exact 0 and 1 plateaus.
AlphaMatte blob_matte(Rng& r, int h, int w, int blobs) {
  AlphaMatte a(h, w, 0.0);
  for (int b = 0; b < blobs; ++b) {
    const double cy = uni(r, 0, h), cx = uni(r, 0, w), rad = uni(r, 2, 0.4 * std::min(h, w));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot(y - cy, x - cx);
        const double v = std::clamp((rad - d) / 3.0, 0.0, 1.0);
        a(y, x) = std::max(a(y, x), v);
      }
    }
  }
  return a;
}

Sample random_sample(Rng& r, int h, int w) {
  Sample s;
  s.trimap = random_trimap(r, h, w);
  s.alpha_gt = AlphaMatte::from_tensor(random_tensor(r, 1, h, w, 0, 1));
  s.fg_gt = ColorMap::from_tensor(random_tensor(r, 3, h, w, 0, 1));
  s.bg_gt = ColorMap::from_tensor(random_tensor(r, 3, h, w, 0, 1));
  Tensor img = composite(s.fg_gt, s.bg_gt, s.alpha_gt).tensor();
  for (double& v : img.values()) v += uni(r, -0.1, 0.1);
  s.image = Image::clipped(std::move(img));
  return s;
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

struct Context {
  const config::AppConfig& cfg;
  std::ostream& log;
  std::string out_dir;
};

// ---------------------------------------------------------------------------

PropertyResult loss_gradients(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1001);
  const int n = 8, J = 3;
  const Sample s = random_sample(r, n, n);
  const Tensor c_gt = random_tensor(r, 1, n, n, 0, 1);
  const std::vector<Tensor> x{random_tensor(r, 1, n, n, 0.05, 0.95),
                              random_tensor(r, 3, n, n, 0, 1), random_tensor(r, 3, n, n, 0, 1)};
  const double gamma = 10.0;
  losses::LossConfig lc = ctx.cfg.losses;
  lc.pyramid_levels = J;

  struct Case {
    std::string name;
    oracle::ScalarFn f;
    std::function<double()> reference;
  };
  auto out_of = [](const std::vector<Var>& v) {
    matting::MattingOutput o;
    o.alpha = v[0];
    o.fg = v[1];
    o.bg = v[2];
    return o;
  };
  auto cfg_with = [&](bool full, bool unknown_only) {
    losses::LossConfig c = lc;
    c.laplacian_full_patch = full;
    c.composite_unknown_only = unknown_only;
    return c;
  };
  const std::vector<Case> cases{
      {"propagating", [&](const std::vector<Var>& v) { return losses::propagating_loss(v[0], c_gt, s.trimap).value; },
       [&] { return oracle::propagating_loss(x[0], c_gt, s.trimap); }},
      {"alpha_weighted",
       [&](const std::vector<Var>& v) {
         return losses::weighted_alpha_loss(v[0], s.alpha_gt.tensor(), s.trimap, gamma).value;
       },
       [&] { return oracle::weighted_alpha_loss(x[0], s.alpha_gt.tensor(), s.trimap, gamma); }},
      {"alpha_composite_unknown",
       [&](const std::vector<Var>& v) { return losses::composite_loss(v[0], s, true).value; },
       [&] { return oracle::composite_loss(x[0], s, true); }},
      {"alpha_composite_full",
       [&](const std::vector<Var>& v) { return losses::composite_loss(v[0], s, false).value; },
       [&] { return oracle::composite_loss(x[0], s, false); }},
      {"alpha_laplacian",
       [&](const std::vector<Var>& v) {
         return losses::laplacian_loss(v[0], Var::constant(s.alpha_gt.tensor()), J);
       },
       [&] { return oracle::dense_laplacian_loss(x[0], s.alpha_gt.tensor(), J); }},
      {"fb_reconstruction",
       [&](const std::vector<Var>& v) { return losses::fb_reconstruction_loss(v[1], v[2], s).value; },
       [&] { return oracle::fb_reconstruction_loss(x[1], x[2], s); }},
      {"fb_composite_unknown",
       [&](const std::vector<Var>& v) { return losses::fb_composite_loss(v[1], v[2], s, true).value; },
       [&] { return oracle::fb_composite_loss(x[1], x[2], s, true); }},
      {"fb_composite_full",
       [&](const std::vector<Var>& v) { return losses::fb_composite_loss(v[1], v[2], s, false).value; },
       [&] { return oracle::fb_composite_loss(x[1], x[2], s, false); }},
      {"fb_laplacian",
       [&](const std::vector<Var>& v) { return losses::fb_laplacian_loss(v[1], v[2], s, J); },
       [&] { return oracle::fb_laplacian_loss(x[1], x[2], s, J); }},
      {"matting_full_patch",
       [&](const std::vector<Var>& v) {
         return losses::matting_loss(out_of(v), s, cfg_with(true, true)).total;
       },
       [&] { return oracle::matting_loss(x[0], x[1], x[2], s, cfg_with(true, true)); }},
      {"matting_unknown_laplacian",
       [&](const std::vector<Var>& v) {
         return losses::matting_loss(out_of(v), s, cfg_with(false, false)).total;
       },
       [&] { return oracle::matting_loss(x[0], x[1], x[2], s, cfg_with(false, false)); }},
  };

  double worst_grad = 0.0, worst_value = 0.0;
  std::string worst_name;
  for (const Case& c : cases) {
    const auto g = oracle::finite_difference_check(c.f, x, 1e-6, 1e-8);
    std::vector<Var> consts;
    for (const Tensor& t : x) consts.push_back(Var::constant(t));
    const double v = c.f(consts).value().item();
    worst_value = std::max(worst_value, rel_diff(v, c.reference()));
    if (g.max_rel_error >= worst_grad) {
      worst_grad = g.max_rel_error;
      worst_name = c.name;
    }
  }
  const bool ok = worst_grad < 1e-4 && worst_value < 1e-12;
  return {"loss_gradients", ok,
          fmt("%zu losses, worst fd rel err %.3e (%s), worst oracle value rel diff %.3e",
              cases.size(), worst_grad, worst_name.c_str(), worst_value)};
}

PropertyResult unknown_weight_clamp(Context&) {
  const double w400 = losses::unknown_weight(400, 100.0);
  const double w100 = losses::unknown_weight(100, 100.0);
  const double w7 = losses::unknown_weight(7, 100.0);
  const bool ok = w400 == 2.0 && w100 == 1.0 && w7 == 1.0;
  return {"unknown_weight_clamp", ok, fmt("w(400)=%.17g w(100)=%.17g w(7)=%.17g", w400, w100, w7)};
}

PropertyResult laplacian_pyramid(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1002);
  const int J = 4;
  const Tensor x = random_tensor(r, 3, 37, 45, 0, 1);
  const auto pyr = losses::laplacian_pyramid(Var::constant(x), J);
  const Tensor rec = losses::laplacian_reconstruct(pyr).value();
  double rec_err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) rec_err = std::max(rec_err, std::abs(rec[i] - x[i]));

  const auto dense = oracle::dense_laplacian_pyramid(x, J);
  double level_err = 0.0;
  for (int j = 0; j <= J; ++j) {
    const Tensor& a = pyr[static_cast<std::size_t>(j)].value();
    const Tensor& b = dense[static_cast<std::size_t>(j)];
    for (std::size_t i = 0; i < a.size(); ++i) level_err = std::max(level_err, std::abs(a[i] - b[i]));
  }
  const double self = losses::laplacian_loss(Var::constant(x), Var::constant(x), J).value().item();

  const double d = 0.125;
  Tensor y = x;
  for (double& v : y.values()) v += d;
  const auto terms = oracle::dense_laplacian_terms(y, x, J);
  double band = 0.0;
  for (int j = 0; j < J; ++j) band = std::max(band, terms[static_cast<std::size_t>(j)]);
  const double top = terms[static_cast<std::size_t>(J)];
  const double impl = losses::laplacian_loss(Var::constant(y), Var::constant(x), J).value().item();
  const double expected = std::pow(2.0, J) * d;
  const bool ok = rec_err < 1e-6 && level_err < 1e-12 && self == 0.0 && band < 1e-12 &&
                  std::abs(top - expected) < 1e-12 && std::abs(impl - expected) < 1e-12;
  return {"laplacian_pyramid", ok,
          fmt("reconstruction %.3e, dense oracle %.3e, Lap(x,x)=%.3g, offset: bands %.3e level J "
              "%.15g (2^J d = %.15g), loss %.15g",
              rec_err, level_err, self, band, top, expected, impl)};
}

PropertyResult distance_transform(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1003);
  std::size_t mismatches = 0, pixels = 0;
  for (int k = 0; k < 12; ++k) {
    Trimap t = random_trimap(r, 32, 32, uni(r, 0.3, 0.97));
    if (k == 0) {
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          if (t(y, x) == Label::Foreground) t(y, x) = Label::Unknown;
        }
      }
    }
    for (Label l : {Label::Foreground, Label::Background}) {
      const auto d = analysis::distance_to_known(t, l);
      const auto o = oracle::brute_distance(t, l);
      for (std::size_t i = 0; i < o.size(); ++i) {
        ++pixels;
        if (!(d.values[i] == o[i])) ++mismatches;
      }
    }
  }
  return {"distance_transform", mismatches == 0,
          fmt("%zu of %zu distances differ from brute force", mismatches, pixels)};
}

PropertyResult pooled_cdf(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1004);
  std::vector<std::pair<Trimap, AlphaMatte>> samples;
  for (int k = 0; k < 6; ++k) {
    samples.emplace_back(random_trimap(r, 24, 28), AlphaMatte::from_tensor(random_tensor(r, 1, 24, 28, 0, 1)));
  }
  const auto stats = analysis::dataset_distance_stats(samples, 2, ctx.cfg.analysis.threshold);
  std::array<std::vector<double>, 4> pooled;
  for (const auto& [t, a] : samples) {
    const auto dfg = oracle::brute_distance(t, Label::Foreground);
    const auto dbg = oracle::brute_distance(t, Label::Background);
    for (int y = 0; y < t.height(); ++y) {
      for (int x = 0; x < t.width(); ++x) {
        if (t(y, x) != Label::Unknown) continue;
        const std::size_t i = static_cast<std::size_t>(y) * t.width() + x;
        const bool fg_like = a(y, x) >= ctx.cfg.analysis.threshold;
        pooled[fg_like ? 0 : 2].push_back(dfg[i]);
        pooled[fg_like ? 1 : 3].push_back(dbg[i]);
      }
    }
  }
  bool ok = true;
  double worst = 0.0;
  for (int c = 0; c < 4; ++c) {
    auto& v = pooled[static_cast<std::size_t>(c)];
    std::sort(v.begin(), v.end());
    ok = ok && v == stats.distances[static_cast<std::size_t>(c)];
    for (double d : {0.0, 1.0, 1.5, 2.0, 3.7, 10.0}) {
      std::size_t below = 0;
      for (double e : v) below += e <= d;
      const double cdf = v.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(v.size());
      worst = std::max(worst, std::abs(cdf - stats.cdf(c, d)));
    }
  }
  ok = ok && worst == 0.0;
  return {"pooled_cdf", ok, fmt("pooled arrays %s, worst cdf diff %.3g", ok ? "equal" : "differ", worst)};
}

PropertyResult synth_trimap(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1005);
  std::size_t diffs = 0, cases = 0;
  for (int k = 0; k < 4; ++k) {
    const AlphaMatte a = blob_matte(r, 24 + k, 20 + 2 * k, 3);
    for (auto [e, d] : {std::pair{1, 1}, {3, 5}, {7, 3}, {9, 9}}) {
      ++cases;
      if (!(datagen::synth_trimap(a, e, d) == oracle::min_filter_trimap(a, e, d))) ++diffs;
    }
  }
  return {"synth_trimap", diffs == 0, fmt("%zu of %zu trimaps differ from the min-filter oracle", diffs, cases)};
}

PropertyResult csp_pool(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1006);
  const Tensor f = random_tensor(r, 3, 11, 13, -1, 1);
  double worst = 0.0;
  for (int g : {1, 2, 3, 4, 6, 11}) {
    const Tensor a = cspp::csp_pool(Var::constant(f), g).value();
    const Tensor b = oracle::block_mean(f, g);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {"csp_pool", worst < 1e-12, fmt("worst block-mean diff %.3e", worst)};
}

PropertyResult metric_oracles(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1007);
  double worst = 0.0;
  bool zero_ok = true;
  for (int k = 0; k < 4; ++k) {
    const int h = 16 + 3 * k, w = 18 + k;
    const AlphaMatte g = blob_matte(r, h, w, 2);
    AlphaMatte p = blob_matte(r, h, w, 2);
    const Trimap t = random_trimap(r, h, w, 0.7);
    worst = std::max({worst, rel_diff(metrics::sad(p, g, t), oracle::sad(p, g, t)),
                      rel_diff(metrics::mse(p, g, t), oracle::mse(p, g, t)),
                      rel_diff(metrics::grad_error(p, g, t), oracle::grad_error(p, g, t)),
                      rel_diff(metrics::conn_error(p, g, t), oracle::conn_error(p, g, t))});
    const auto z = metrics::evaluate(g, g, t);
    zero_ok = zero_ok && z.sad == 0.0 && z.mse == 0.0 && z.grad == 0.0 && z.conn == 0.0;
  }
  return {"metric_oracles", worst < 1e-9 && zero_ok,
          fmt("worst rel diff %.3e, metrics(gt, gt) %s", worst, zero_ok ? "all zero" : "nonzero")};
}

PropertyResult composite_roundtrip(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto assets = datagen::procedural_assets(cfg.core.seed, 2, 2, cfg.datagen.procedural_side);
  double worst = 0.0;
  std::size_t label_violations = 0;
  bool zero_ok = true;
  const double eps = 1.0 / 255.0;
  for (std::uint64_t i = 0; i < 4; ++i) {
    const auto ts = datagen::generate_sample(assets, cfg.datagen.augment, cfg.core.seed, i);
    const Sample& s = ts.inner;
    const Tensor c = composite(s.fg_gt, s.bg_gt, s.alpha_gt).tensor();
    for (std::size_t k = 0; k < c.size(); ++k) {
      worst = std::max(worst, std::abs(c[k] - s.image.tensor()[k]));
    }
    for (int y = 0; y < s.trimap.height(); ++y) {
      for (int x = 0; x < s.trimap.width(); ++x) {
        const Label l = s.trimap(y, x);
        if ((l == Label::Foreground && s.alpha_gt(y, x) < 1.0 - eps) ||
            (l == Label::Background && s.alpha_gt(y, x) > eps)) {
          ++label_violations;
        }
      }
    }
    const auto z = metrics::evaluate(s.alpha_gt, s.alpha_gt, s.trimap);
    zero_ok = zero_ok && z.sad == 0.0 && z.mse == 0.0 && z.grad == 0.0 && z.conn == 0.0;
  }
  return {"composite_roundtrip", worst < 1e-6 && label_violations == 0 && zero_ok,
          fmt("max |composite - I| %.3e, label violations %zu, metrics(gt, gt) %s", worst,
              label_violations, zero_ok ? "all zero" : "nonzero")};
}

// Translation-equivariant stand-in for a network.
class BlurModel final : public inference::TileModel {
 public:
  inference::TilePrediction predict(const Image& inner_image, const Trimap&,
                                    const ContextPair& c) const override {
    const Tensor b = oracle::box_blur3(c.image.tensor());
    const int s = c.geometry.inner_side, o = c.geometry.inner_offset();
    Tensor inner = Tensor::chw(3, s, s);
    Tensor a = Tensor::chw(1, s, s);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) inner.at(ch, y, x) = b.at(ch, y + o, x + o);
      }
    }
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) a.at(0, y, x) = inner.at(0, y, x);
    }
    return {AlphaMatte::from_tensor(a), ColorMap::from_tensor(inner),
            ColorMap::retag(inner_image)};
  }
};

PropertyResult crop_and_stitch(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1008);
  const BlurModel model;
  double worst = 0.0;
  for (int k = 0; k < 6; ++k) {
    const int h = std::uniform_int_distribution<int>(9, 90)(r);
    const int w = std::uniform_int_distribution<int>(9, 90)(r);
    const Image img = Image::from_tensor(random_tensor(r, 3, h, w, 0, 1));
    const Trimap t(h, w, Label::Unknown);
    inference::InferenceConfig ic;
    ic.inner_side = 16;
    ic.overlap = k % 2 ? 6 : 0;
    ic.blend = k % 2 ? inference::Blend::LinearRamp : inference::Blend::None;
    ic.workers = ctx.cfg.core.workers();
    const auto res = inference::run_tiled(img, t, model, ic);
    const Tensor ref = oracle::box_blur3(img.tensor());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        worst = std::max(worst, std::abs(res.raw_alpha(y, x) - ref.at(0, y, x)));
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(res.fg.at(c, y, x) - ref.at(c, y, x)));
      }
    }
  }
  return {"crop_and_stitch", worst < 1e-6, fmt("max tiled vs whole-image diff %.3e", worst)};
}

ModelConfig toy_model() {
  ModelConfig m = config::preset("tiny").model();
  m.propagating.bottleneck.csp_grids = {1, 2};
  m.matting.ppm_grids = {1, 2};
  return m;
}

datagen::TrainingSample toy_sample(Rng& r, int s) {
  datagen::TrainingSample ts;
  ts.inner = random_sample(r, s, s);
  ts.context.image = Image::from_tensor(random_tensor(r, 3, 2 * s, 2 * s, 0, 1));
  ts.context.trimap = random_trimap(r, 2 * s, 2 * s);
  ts.context.geometry = make_patch_geometry(s / 2, s / 2, s, 2 * s, 2 * s);
  ts.context_alpha_gt = AlphaMatte::from_tensor(random_tensor(r, 1, 2 * s, 2 * s, 0, 1));
  return ts;
}

PropertyResult model_gradients(Context& ctx) {
  Rng r(ctx.cfg.core.seed ^ 0x1009);
  const int side = 16;
  const ModelConfig mc = toy_model();
  config::check_patch_side(mc, side);
  LfpModel model(mc, ctx.cfg.core.seed);
  const datagen::TrainingSample ts = toy_sample(r, side);
  training::TrainConfig tc = ctx.cfg.training;
  tc.loss.pyramid_levels = 3;
  std::vector<Var> leaves;
  for (const auto& e : model.params().entries()) leaves.push_back(e.var);
  const auto g = oracle::finite_difference_check_leaves(
      [&] {
        Var total;
        training::evaluate_step(model, ts, 3, tc, &total);
        return total;
      },
      leaves, 2, 1e-6, 1e-4);
  return {"model_gradients", g.max_rel_error < 1e-4,
          fmt("%zu entries over %zu parameter arrays, worst rel err %.3e, worst abs err %.3e, "
              "%zu one-sided",
              g.entries, leaves.size(), g.max_rel_error, g.max_abs_error, g.one_sided)};
}

PropertyResult training_run(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto assets = datagen::procedural_assets(cfg.core.seed, cfg.datagen.procedural_fg,
                                                 cfg.datagen.procedural_bg, cfg.datagen.procedural_side);
  std::vector<datagen::TrainingSample> data(static_cast<std::size_t>(cfg.datagen.samples));
  parallel_for(data.size(), cfg.core.workers(), [&](std::size_t i) {
    data[i] = datagen::generate_sample(assets, cfg.datagen.augment, cfg.core.seed, i);
  });
  LfpModel model(cfg.model(), cfg.core.seed);
  training::TrainHooks hooks;
  hooks.config_snapshot = config::to_json(cfg);
  bool finite = true;
  hooks.on_step = [&](const training::StepRecord& rec) {
    finite = finite && std::isfinite(rec.total);
    ctx.log << training::to_json_line(rec) << "\n";
  };
  training::StageReport pre;
  const auto init = training::pretrain_propagating(model, data, cfg.training, hooks, &pre);
  const auto res = training::train_three_stage(model, data, cfg.training, init, hooks);

  bool frozen = pre.frozen_unchanged(), moments = pre.moments_zero_at_start;
  std::string stages = fmt("stage 0 %.6g->%.6g", pre.first_epoch_loss, pre.last_epoch_loss);
  for (const auto& s : res.stages) {
    frozen = frozen && s.frozen_unchanged();
    moments = moments && s.moments_zero_at_start;
    stages += fmt(", stage %d %.6g->%.6g", s.stage, s.first_epoch_loss, s.last_epoch_loss);
  }

  const std::string path = (std::filesystem::path(ctx.out_dir) / "check.lfpckpt").string();
  training::save_checkpoint(path, res.checkpoint);
  const auto loaded = training::load_checkpoint(path);
  const bool roundtrip = loaded == res.checkpoint;

  LfpModel reloaded(cfg.model(), cfg.core.seed + 1);
  training::restore(reloaded.params(), loaded);
  const double a = training::evaluate_step(model, data.front(), 3, cfg.training).total;
  const double b = training::evaluate_step(reloaded, data.front(), 3, cfg.training).total;

  const std::uint64_t hash = training::parameter_hash(model.params(), [](const std::string&) { return true; });
  const bool ok = finite && frozen && moments && roundtrip && a == b;
  return {"training_run", ok,
          fmt("%s; frozen sets %s, moments reset %s, checkpoint round trip %s, reload loss %s, "
              "parameter hash %016llx",
              stages.c_str(), frozen ? "unchanged" : "CHANGED", moments ? "yes" : "NO",
              roundtrip ? "exact" : "DIFFERS", a == b ? "identical" : "DIFFERS",
              static_cast<unsigned long long>(hash))};
}

}  // namespace

CheckResult run_check(const config::AppConfig& cfg, const std::string& out_dir, std::ostream& console) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());
  write_config_echo((std::filesystem::path(out_dir) / "config.json").string(), cfg);
  const std::string log_path = (std::filesystem::path(out_dir) / "check.log").string();
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw IoError("cannot write " + log_path);

  Context ctx{cfg, log, out_dir};
  using Fn = PropertyResult (*)(Context&);
  const std::vector<std::pair<const char*, Fn>> suite{
      {"loss_gradients", loss_gradients},   {"unknown_weight_clamp", unknown_weight_clamp},
      {"laplacian_pyramid", laplacian_pyramid}, {"distance_transform", distance_transform},
      {"pooled_cdf", pooled_cdf},           {"synth_trimap", synth_trimap},
      {"csp_pool", csp_pool},               {"metric_oracles", metric_oracles},
      {"composite_roundtrip", composite_roundtrip}, {"crop_and_stitch", crop_and_stitch},
      {"model_gradients", model_gradients}, {"training_run", training_run},
  };

  CheckResult result;
  for (const auto& [name, fn] : suite) {
    const auto t0 = std::chrono::steady_clock::now();
    PropertyResult p;
    try {
      p = fn(ctx);
    } catch (const std::exception& e) {
      p = {name, false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << "{\"property\":" << json_string(p.name) << ",\"passed\":" << (p.passed ? "true" : "false")
        << ",\"detail\":" << json_string(p.detail) << "}\n";
    log.flush();
    console << (p.passed ? "[PASS] " : "[FAIL] ") << p.name << " (" << fmt("%.1f", secs)
            << " s): " << p.detail << "\n";
    console.flush();
    result.properties.push_back(std::move(p));
  }
  console << (result.passed() ? "all properties passed" : "some properties FAILED") << "\n";
  return result;
}

}  // namespace lfp::app
