// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "app.hpp"
#include "fixtures.hpp"
#include "lfp/analysis.hpp"
#include "lfp/config.hpp"
#include "lfp/datagen.hpp"
#include "lfp/inference.hpp"
#include "lfp/losses.hpp"
#include "lfp/metrics.hpp"
#include "lfp/model.hpp"
#include "lfp/oracle.hpp"
#include "lfp/training.hpp"

namespace {

using namespace lfp;
using lfp::testing::max_abs_diff;
using lfp::testing::random_tensor;
using lfp::testing::random_trimap;
using lfp::testing::Rng;
using nn::Tensor;
using nn::Var;
namespace fs = std::filesystem;

struct Outcome {
  bool ok = false;
  std::string detail;
};

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[768];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

const config::AppConfig& tiny() {
  static const config::AppConfig c = config::preset("tiny");
  return c;
}

// 1 --------------------------------------------------------------------------

Outcome loss_gradients() {
  Rng r(101);
  const int n = 8, J = 3;
  const Sample s = lfp::testing::random_sample(r, n, n);
  const Tensor c_gt = random_tensor(r, 1, n, n);
  const std::vector<Tensor> x{random_tensor(r, 1, n, n, 0.05, 0.95), random_tensor(r, 3, n, n),
                              random_tensor(r, 3, n, n)};
  losses::LossConfig lc = tiny().losses;
  lc.pyramid_levels = J;
  auto out_of = [](const std::vector<Var>& v) {
    matting::MattingOutput o;
    o.alpha = v[0];
    o.fg = v[1];
    o.bg = v[2];
    return o;
  };
  auto with = [&](bool full, bool unknown_only) {
    losses::LossConfig c = lc;
    c.laplacian_full_patch = full;
    c.composite_unknown_only = unknown_only;
    return c;
  };
  const std::vector<std::pair<std::string, oracle::ScalarFn>> cases{
      {"L_p", [&](const std::vector<Var>& v) { return losses::propagating_loss(v[0], c_gt, s.trimap).value; }},
      {"L_alpha weighted",
       [&](const std::vector<Var>& v) {
         return losses::weighted_alpha_loss(v[0], s.alpha_gt.tensor(), s.trimap, 10.0).value;
       }},
      {"L_comp U", [&](const std::vector<Var>& v) { return losses::composite_loss(v[0], s, true).value; }},
      {"L_comp full", [&](const std::vector<Var>& v) { return losses::composite_loss(v[0], s, false).value; }},
      {"L_lap alpha",
       [&](const std::vector<Var>& v) { return losses::laplacian_loss(v[0], Var::constant(s.alpha_gt.tensor()), J); }},
      {"L_FB", [&](const std::vector<Var>& v) { return losses::fb_reconstruction_loss(v[1], v[2], s).value; }},
      {"L_FB comp U", [&](const std::vector<Var>& v) { return losses::fb_composite_loss(v[1], v[2], s, true).value; }},
      {"L_FB comp full",
       [&](const std::vector<Var>& v) { return losses::fb_composite_loss(v[1], v[2], s, false).value; }},
      {"L_FB lap", [&](const std::vector<Var>& v) { return losses::fb_laplacian_loss(v[1], v[2], s, J); }},
      {"L_m full-patch lap", [&](const std::vector<Var>& v) { return losses::matting_loss(out_of(v), s, with(true, true)).total; }},
      {"L_m U lap", [&](const std::vector<Var>& v) { return losses::matting_loss(out_of(v), s, with(false, false)).total; }},
  };
  double worst = 0;
  std::string name;
  for (const auto& [n_, f] : cases) {
    const auto g = oracle::finite_difference_check(f, x, 1e-6, 1e-8);
    if (g.max_rel_error >= worst) {
      worst = g.max_rel_error;
      name = n_;
    }
  }
  return {worst < 1e-4, fmt("%zu losses on 8x8, worst rel err %.3e (%s)", cases.size(), worst, name.c_str())};
}

// 2 --------------------------------------------------------------------------

struct Probe {
  double centre = 0;
  double max = 0;
};

// Change of the inner matting alpha when the top-left context pixel is flipped.
Probe far_corner_change(const ModelConfig& mc, std::uint64_t seed) {
  const LfpModel model(mc, seed);
  Rng r(seed ^ 0x2002);
  const int s = tiny().inference.inner_side;
  const Image inner = Image::from_tensor(random_tensor(r, 3, s, s));
  const Trimap inner_t = random_trimap(r, s, s);
  const Image ctx = Image::from_tensor(random_tensor(r, 3, 2 * s, 2 * s));
  const Trimap ctx_t = random_trimap(r, 2 * s, 2 * s);
  Tensor moved = ctx.tensor();
  for (int c = 0; c < 3; ++c) moved.at(c, 0, 0) = 1.0 - moved.at(c, 0, 0);

  const Var in = Var::constant(propagating::network_input(inner, inner_t));
  const Tensor a = model.forward(in, Var::constant(propagating::network_input(ctx, ctx_t))).matting.alpha.value();
  const Tensor b =
      model.forward(in, Var::constant(propagating::network_input(Image::from_tensor(moved), ctx_t)))
          .matting.alpha.value();
  return {std::abs(a.at(0, s / 2, s / 2) - b.at(0, s / 2, s / 2)), max_abs_diff(a, b)};
}

Outcome long_range() {
  const ModelConfig standard = tiny().model();
  if (standard.propagating.variant != cspp::Variant::Cspp) return {false, "tiny preset is not cspp"};
  const Probe global = far_corner_change(standard, tiny().core.seed);

  ModelConfig probe = standard;
  probe.propagating.variant = cspp::Variant::None;
  probe.propagating.norm = nn::NormKind::None;
  probe.propagating.stem_kernel = 1;
  probe.propagating.block_kernel = 1;
  probe.propagating.decoder_kernel = 1;
  probe.propagating.head_kernel = 1;
  const int s = tiny().inference.inner_side;
  const int extent = propagating::context_influence_extent(probe.propagating, 2 * s);
  const int separation = s / 2;
  const Probe local = far_corner_change(probe, tiny().core.seed);

  const bool ok = global.centre > 1e-9 && extent < separation && local.max == 0.0;
  return {ok, fmt("cspp: centre change %.3e (max %.3e); none probe: receptive extent %d px < separation %d px, "
                  "max change %.3g",
                  global.centre, global.max, extent, separation, local.max)};
}

// 3 --------------------------------------------------------------------------

// Translation-equivariant stand-in: 3x3 box blur of the context, cropped to the inner window.
class BlurModel final : public inference::TileModel {
 public:
  inference::TilePrediction predict(const Image& inner_image, const Trimap&, const ContextPair& c) const override {
    const Tensor b = oracle::box_blur3(c.image.tensor());
    const int s = c.geometry.inner_side, o = c.geometry.inner_offset();
    Tensor inner = Tensor::chw(3, s, s), a = Tensor::chw(1, s, s);
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) inner.at(ch, y, x) = b.at(ch, y + o, x + o);
      }
    }
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) a.at(0, y, x) = inner.at(0, y, x);
    }
    return {AlphaMatte::from_tensor(a), ColorMap::from_tensor(inner), ColorMap::retag(inner_image)};
  }
};

Outcome crop_and_stitch() {
  Rng r(303);
  const BlurModel model;
  double worst = 0;
  std::string sizes;
  for (int k = 0; k < 20; ++k) {
    const int h = lfp::testing::uni_int(r, 5, 150), w = lfp::testing::uni_int(r, 5, 150);
    const Image img = Image::from_tensor(random_tensor(r, 3, h, w));
    inference::InferenceConfig ic;
    ic.inner_side = k % 3 == 0 ? 16 : 32;
    ic.overlap = k % 2 ? ic.inner_side / 4 : 0;
    ic.blend = k % 2 ? inference::Blend::LinearRamp : inference::Blend::None;
    const auto res = inference::run_tiled(img, Trimap(h, w, Label::Unknown), model, ic);
    const Tensor ref = oracle::box_blur3(img.tensor());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        worst = std::max(worst, std::abs(res.raw_alpha(y, x) - ref.at(0, y, x)));
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(res.fg.at(c, y, x) - ref.at(c, y, x)));
      }
    }
    if (k < 4) sizes += fmt("%dx%d ", h, w);
  }
  return {worst < 1e-6, fmt("20 sizes (%s...), max |tiled - whole| %.3e", sizes.c_str(), worst)};
}

// 4 --------------------------------------------------------------------------

Outcome distance_analyzer() {
  Rng r(404);
  std::size_t mismatches = 0, pixels = 0;
  std::vector<std::pair<Trimap, AlphaMatte>> samples;
  for (int k = 0; k < 50; ++k) {
    Trimap t = random_trimap(r, 32, 32, lfp::testing::uni(r, 0.2, 0.98));
    if (k == 0) {
      // no foreground at all
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
        mismatches += !(d.values[i] == o[i]);
      }
    }
    samples.emplace_back(t, lfp::testing::random_alpha(r, 32, 32));
  }

  const double thr = tiny().analysis.threshold;
  const auto stats = analysis::dataset_distance_stats(samples, 1, thr);
  std::array<std::vector<double>, 4> pooled;
  std::size_t skipped = 0;
  for (const auto& [t, a] : samples) {
    if (t.count(Label::Foreground) == 0 || t.count(Label::Background) == 0) {
      ++skipped;
      continue;
    }
    const auto dfg = oracle::brute_distance(t, Label::Foreground);
    const auto dbg = oracle::brute_distance(t, Label::Background);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        if (t(y, x) != Label::Unknown) continue;
        const std::size_t i = static_cast<std::size_t>(y) * 32 + x;
        const bool fg_like = a(y, x) >= thr;
        pooled[fg_like ? 0 : 2].push_back(dfg[i]);
        pooled[fg_like ? 1 : 3].push_back(dbg[i]);
      }
    }
  }
  bool pooled_ok = true;
  double worst_cdf = 0;
  for (int c = 0; c < 4; ++c) {
    auto& v = pooled[static_cast<std::size_t>(c)];
    std::sort(v.begin(), v.end());
    pooled_ok = pooled_ok && v == stats.distances[static_cast<std::size_t>(c)];
    for (double d : {0.0, 1.0, std::sqrt(2.0), 2.5, 5.0, 12.0, 1e300}) {
      const auto below = std::upper_bound(v.begin(), v.end(), d) - v.begin();
      const double cdf = v.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(v.size());
      worst_cdf = std::max(worst_cdf, std::abs(cdf - stats.cdf(c, d)));
    }
  }
  const bool skip_ok = skipped == 1 && stats.samples_skipped == 1 && stats.samples_used == 49;
  return {mismatches == 0 && pooled_ok && worst_cdf == 0.0 && skip_ok,
          fmt("%zu of %zu distances differ from brute force; pooled arrays %s, worst cdf diff %.3g, "
              "%zu sample without FG skipped",
              mismatches, pixels, pooled_ok ? "equal" : "DIFFER", worst_cdf, stats.samples_skipped)};
}

// 5 --------------------------------------------------------------------------

Outcome compositing_round_trip() {
  const auto& cfg = tiny();
  const auto assets = datagen::procedural_assets(cfg.core.seed, cfg.datagen.procedural_fg, cfg.datagen.procedural_bg,
                                                 cfg.datagen.procedural_side);
  double worst = 0;
  bool zero = true;
  const int count = 24;
  for (int i = 0; i < count; ++i) {
    const auto ts = datagen::generate_sample(assets, cfg.datagen.augment, cfg.core.seed, static_cast<std::uint64_t>(i));
    const Sample& s = ts.inner;
    worst = std::max(worst, max_abs_diff(composite(s.fg_gt, s.bg_gt, s.alpha_gt).tensor(), s.image.tensor()));
    const auto m = metrics::evaluate(s.alpha_gt, s.alpha_gt, s.trimap);
    zero = zero && m.sad == 0.0 && m.mse == 0.0 && m.grad == 0.0 && m.conn == 0.0;
  }
  return {worst < 1e-6 && zero, fmt("%d samples, max |composite - I| %.3e, metrics(gt, gt) %s", count, worst,
                                    zero ? "(0,0,0,0)" : "NONZERO")};
}

// 6 --------------------------------------------------------------------------

Outcome weight_clamp() {
  const double w400 = losses::unknown_weight(400, 100.0);
  bool small_ok = true;
  for (std::size_t u : {0u, 1u, 50u, 99u, 100u}) small_ok = small_ok && losses::unknown_weight(u, 100.0) == 1.0;
  return {w400 == 2.0 && small_ok, fmt("w(400) = %.17g, |U| <= 100 gives 1: %s", w400, small_ok ? "yes" : "NO")};
}

// 7 --------------------------------------------------------------------------

Outcome laplacian() {
  Rng r(707);
  const int J = 4;
  const Tensor x = random_tensor(r, 3, 41, 38);
  const auto pyr = losses::laplacian_pyramid(Var::constant(x), J);
  const double rec = max_abs_diff(losses::laplacian_reconstruct(pyr).value(), x);
  const double self = losses::laplacian_loss(Var::constant(x), Var::constant(x), J).value().item();

  const double d = 0.2;
  Tensor y = x;
  for (double& v : y.values()) v += d;
  const auto terms = oracle::dense_laplacian_terms(y, x, J);
  double bands = 0;
  for (int j = 0; j < J; ++j) bands = std::max(bands, terms[static_cast<std::size_t>(j)]);
  const double top = terms[static_cast<std::size_t>(J)];
  const double impl = losses::laplacian_loss(Var::constant(y), Var::constant(x), J).value().item();
  const double want = std::pow(2.0, J) * d;
  const bool ok = rec < 1e-6 && self == 0.0 && bands < 1e-12 && std::abs(top - want) < 1e-12 &&
                  std::abs(impl - top) < 1e-12;
  return {ok, fmt("reconstruction %.3e, Lap(x,x) = %.3g, offset %.2f: bands %.3e, level J %.15g (2^J d %.15g), "
                  "loss %.15g",
                  rec, self, d, bands, top, want, impl)};
}

// 8 --------------------------------------------------------------------------

Outcome training_smoke() {
  const auto& cfg = tiny();
  const auto assets = datagen::procedural_assets(cfg.core.seed, cfg.datagen.procedural_fg, cfg.datagen.procedural_bg,
                                                 cfg.datagen.procedural_side);
  const auto sample = datagen::generate_sample(assets, cfg.datagen.augment, cfg.core.seed, 0);
  if (sample.inner.image.height() != 64) return {false, "sample is not 64 px"};

  LfpModel model(cfg.model(), cfg.core.seed);
  model.params().set_trainable(training::stage_filter(3));
  training::RAdam opt(model.params(), cfg.training.optimizer);
  const double initial = training::evaluate_step(model, sample, 3, cfg.training).losses.at("matting");
  bool finite = true;
  for (int i = 0; i < 200; ++i) {
    finite = finite && std::isfinite(training::train_step(model, opt, sample, 3, cfg.training).total);
  }
  const double final_loss = training::evaluate_step(model, sample, 3, cfg.training).losses.at("matting");
  const double ratio = final_loss / initial;

  LfpModel staged(cfg.model(), cfg.core.seed);
  const std::vector<datagen::TrainingSample> data{sample};
  training::StageReport pre;
  const auto init = training::pretrain_propagating(staged, data, cfg.training, {}, &pre);
  const auto res = training::train_three_stage(staged, data, cfg.training, init);
  bool frozen = pre.frozen_unchanged();
  std::string hashes = fmt("%016llx", static_cast<unsigned long long>(pre.frozen_hash_after));
  for (const auto& s : res.stages) {
    frozen = frozen && s.frozen_unchanged() && s.moments_zero_at_start;
    hashes += fmt(" %016llx", static_cast<unsigned long long>(s.frozen_hash_after));
  }
  return {finite && ratio < 0.2 && frozen,
          fmt("lr %g, L_m %.6g -> %.6g (ratio %.4f); frozen-set hashes %s %s", cfg.training.optimizer.lr, initial,
              final_loss, ratio, hashes.c_str(), frozen ? "unchanged" : "CHANGED")};
}

// 9 --------------------------------------------------------------------------

Outcome ablation_plumbing() {
  const auto& cfg = tiny();
  const auto assets = datagen::procedural_assets(cfg.core.seed, cfg.datagen.procedural_fg, cfg.datagen.procedural_bg,
                                                 cfg.datagen.procedural_side);
  const auto ts = datagen::generate_sample(assets, cfg.datagen.augment, cfg.core.seed, 1);
  const Image& img = ts.context.image;
  const Trimap& tri = ts.context.trimap;

  std::vector<Tensor> outs;
  std::vector<std::string> names;
  bool sane = true;
  for (int side : {64, 128}) {
    for (auto v : {cspp::Variant::None, cspp::Variant::NonLocal, cspp::Variant::Aspp, cspp::Variant::Cspp}) {
      ModelConfig m = cfg.model();
      m.propagating.variant = v;
      config::check_patch_side(m, side);
      const LfpModel model(m, cfg.core.seed);
      inference::InferenceConfig ic = cfg.inference;
      ic.inner_side = side;
      const auto res = inference::infer(img, tri, inference::NetworkTileModel(model), ic);
      for (double a : res.alpha.tensor().values()) sane = sane && a >= 0.0 && a <= 1.0;
      outs.push_back(res.raw_alpha.tensor());
      names.push_back(cspp::to_string(v) + "/" + std::to_string(side));
    }
  }
  double closest = 1e300;
  std::string pair;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (std::size_t j = i + 1; j < outs.size(); ++j) {
      const double d = max_abs_diff(outs[i], outs[j]);
      if (d < closest) {
        closest = d;
        pair = names[i] + " vs " + names[j];
      }
    }
  }
  return {sane && closest > 1e-9, fmt("%zu runs on a %dx%d image, closest pair %s differs by %.3e", outs.size(),
                                      img.height(), img.width(), pair.c_str(), closest)};
}

// 10 -------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const auto cfg = config::resolve("", "", {});
  const fs::path root = fs::temp_directory_path() / "lfp_acceptance_check";
  fs::remove_all(root);
  bool passed = true;
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    std::ostringstream console;
    passed = app::run_check(cfg, (root / run).string(), console).passed() && passed;
  }
  const std::string la = slurp(root / "a" / "check.log"), lb = slurp(root / "b" / "check.log");
  const std::string ca = slurp(root / "a" / "check.lfpckpt"), cb = slurp(root / "b" / "check.lfpckpt");
  fs::remove_all(root);
  const bool ok = passed && !la.empty() && !ca.empty() && la == lb && ca == cb;
  return {ok, fmt("check %s; check.log %zu bytes %s, check.lfpckpt %zu bytes %s", passed ? "passed" : "FAILED",
                  la.size(), la == lb ? "identical" : "DIFFER", ca.size(), ca == cb ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "loss gradients", 60, loss_gradients},
      {2, "long-range propagation", 120, long_range},
      {3, "crop-and-stitch exactness", 60, crop_and_stitch},
      {4, "distance analyzer", 30, distance_analyzer},
      {5, "compositing round trips", 0, compositing_round_trip},
      {6, "weighted-loss clamp", 0, weight_clamp},
      {7, "laplacian pyramid", 0, laplacian},
      {8, "training smoke", 600, training_smoke},
      {9, "ablation plumbing", 0, ablation_plumbing},
      {10, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      o.ok = false;
      o.detail += fmt(" [over the %.0f s budget]", c.budget_s);
    }
    failed += !o.ok;
    std::cout << (o.ok ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << " (" << fmt("%.1f", secs)
              << " s): " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
