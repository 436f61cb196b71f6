#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "app.hpp"
#include "lfp/analysis.hpp"
#include "lfp/datagen.hpp"
#include "lfp/inference.hpp"
#include "lfp/io.hpp"
#include "lfp/metrics.hpp"
#include "lfp/model.hpp"
#include "lfp/parallel.hpp"
#include "lfp/training.hpp"

namespace lfp::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

std::string numbered(std::uint64_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu%s", static_cast<unsigned long long>(i), ext);
  return buf;
}

// file.ext -> file.config.json next to it.
std::string echo_path_for(const std::string& file) {
  fs::path p(file);
  return (p.parent_path() / (p.stem().string() + ".config.json")).string();
}

datagen::AssetSet assets_for(const config::AppConfig& cfg, const std::string& data_dir) {
  if (!data_dir.empty()) return datagen::load_asset_folder(data_dir);
  return datagen::procedural_assets(cfg.core.seed, cfg.datagen.procedural_fg,
                                    cfg.datagen.procedural_bg, cfg.datagen.procedural_side);
}

json geometry_json(const PatchGeometry& g) {
  auto pad = [](const Padding& p) {
    return json{{"left", p.left}, {"top", p.top}, {"right", p.right}, {"bottom", p.bottom}};
  };
  return json{{"inner_x", g.inner_x},          {"inner_y", g.inner_y},
              {"inner_side", g.inner_side},    {"context_x", g.context_x},
              {"context_y", g.context_y},      {"context_side", g.context_side},
              {"inner_pad", pad(g.inner_pad)}, {"context_pad", pad(g.context_pad)}};
}

json meta_json(const datagen::SampleMeta& m, std::uint64_t seed, std::uint64_t index,
               const datagen::AssetSet& assets) {
  const std::size_t fg = static_cast<std::size_t>(index % assets.fg.size());
  const datagen::AugmentParams& a = m.augment;
  return json{{"index", index},
              {"seed", seed},
              {"foreground", fg < assets.fg_names.size() ? assets.fg_names[fg] : std::to_string(fg)},
              {"crop_size", m.crop_size},
              {"inner_x", m.inner_x},
              {"inner_y", m.inner_y},
              {"scene_height", m.scene_height},
              {"scene_width", m.scene_width},
              {"erode_k", m.erode_k},
              {"dilate_k", m.dilate_k},
              {"fg_to_unknown", m.fg_to_unknown},
              {"augment",
               {{"rotation_deg", a.rotation_deg},
                {"scale", a.scale},
                {"shear_deg", a.shear_deg},
                {"flip", a.flip},
                {"saturation", a.saturation},
                {"grayscale", a.grayscale},
                {"gamma", a.gamma},
                {"contrast", a.contrast}}},
              {"geometry", geometry_json(m.geometry)}};
}

int cmd_generate(const config::AppConfig& cfg, const std::string& out_dir, int count,
                 const std::string& data_dir, std::ostream& out) {
  const datagen::AssetSet assets = assets_for(cfg, data_dir);
  const fs::path root(out_dir);
  for (const char* sub : {"image", "trimap", "alpha", "fg", "bg", "context_image",
                          "context_trimap", "context_alpha", "meta"}) {
    make_dirs(root / sub);
  }
  write_config_echo((root / "config.json").string(), cfg);
  const std::uint64_t n = count > 0 ? static_cast<std::uint64_t>(count)
                                    : static_cast<std::uint64_t>(cfg.datagen.samples);
  datagen::SampleStream stream(assets, cfg.datagen.augment, cfg.core.seed, cfg.core.workers(),
                               static_cast<std::size_t>(cfg.datagen.queue_capacity), n);
  datagen::TrainingSample s;
  std::uint64_t i = 0;
  while (stream.next(s)) {
    const std::string png = numbered(i, ".png");
    io::write_image((root / "image" / png).string(), s.inner.image);
    io::write_trimap((root / "trimap" / png).string(), s.inner.trimap);
    io::write_alpha((root / "alpha" / png).string(), s.inner.alpha_gt, true);
    io::write_color((root / "fg" / png).string(), s.inner.fg_gt);
    io::write_color((root / "bg" / png).string(), s.inner.bg_gt);
    io::write_image((root / "context_image" / png).string(), s.context.image);
    io::write_trimap((root / "context_trimap" / png).string(), s.context.trimap);
    io::write_alpha((root / "context_alpha" / png).string(), s.context_alpha_gt, true);
    io::write_text((root / "meta" / numbered(i, ".json")).string(),
                   meta_json(s.meta, cfg.core.seed, i, assets).dump(2) + "\n");
    ++i;
  }
  out << "wrote " << i << " samples to " << out_dir << "\n";
  return kOk;
}

// Files in dir keyed by stem.
std::map<std::string, std::string> by_stem(const std::string& dir) {
  std::map<std::string, std::string> m;
  for (const std::string& f : io::list_images(dir)) m[fs::path(f).stem().string()] = f;
  return m;
}

int cmd_analyze(const config::AppConfig& cfg, const std::string& dataset, const std::string& out_path,
                const std::string& plot, std::ostream& out) {
  const auto trimaps = by_stem((fs::path(dataset) / "trimap").string());
  const auto alphas = by_stem((fs::path(dataset) / "alpha").string());
  if (trimaps.empty()) throw DataError("no trimaps under " + dataset + "/trimap");
  std::vector<std::pair<Trimap, AlphaMatte>> samples;
  for (const auto& [stem, tpath] : trimaps) {
    const auto it = alphas.find(stem);
    if (it == alphas.end()) throw DataError("no alpha matte for trimap '" + stem + "'");
    Trimap t = io::read_trimap(tpath);
    AlphaMatte a = io::read_alpha(it->second);
    require_same_size(t.height(), t.width(), a.height(), a.width(), "trimap and alpha");
    samples.emplace_back(std::move(t), std::move(a));
  }
  const analysis::DistanceStats stats =
      analysis::dataset_distance_stats(samples, cfg.core.workers(), cfg.analysis.threshold);
  io::write_text(out_path, analysis::stats_to_json(stats));
  write_config_echo(echo_path_for(out_path), cfg);
  if (!plot.empty()) analysis::write_distance_plot(stats, plot, cfg.analysis.marker_px);
  out << "samples used " << stats.samples_used << ", skipped " << stats.samples_skipped << "\n";
  for (int c = 0; c < 4; ++c) {
    out << std::setw(14) << analysis::curve_name(c);
    for (std::size_t r = 0; r < analysis::kPercentileRanks.size(); ++r) {
      out << "  p" << analysis::kPercentileRanks[r] << "="
          << stats.percentiles[static_cast<std::size_t>(c)][r];
    }
    out << "\n";
  }
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string init;
  bool pretrain_only = false;
};

int cmd_train(const config::AppConfig& cfg, const TrainArgs& a, std::ostream& out) {
  const fs::path root(a.out);
  make_dirs(root / "checkpoints");
  write_config_echo((root / "config.json").string(), cfg);
  const std::string snapshot = config::to_json(cfg);

  const datagen::AssetSet assets = assets_for(cfg, a.data);
  std::vector<datagen::TrainingSample> data;
  {
    datagen::SampleStream stream(assets, cfg.datagen.augment, cfg.core.seed, cfg.core.workers(),
                                 static_cast<std::size_t>(cfg.datagen.queue_capacity),
                                 static_cast<std::uint64_t>(cfg.datagen.samples));
    datagen::TrainingSample s;
    while (stream.next(s)) data.push_back(std::move(s));
  }
  if (data.empty()) throw DataError("training set is empty");

  LfpModel model(cfg.model(), cfg.core.seed);
  std::ofstream log((root / "metrics.jsonl").string(), std::ios::binary);
  if (!log) throw IoError("cannot write " + (root / "metrics.jsonl").string());
  training::TrainHooks hooks;
  hooks.config_snapshot = snapshot;
  hooks.on_step = [&](const training::StepRecord& r) { log << training::to_json_line(r) << "\n"; };
  hooks.on_checkpoint = [&](const training::Checkpoint& c) {
    const std::string name = "stage" + std::to_string(c.stage) + "_step" + std::to_string(c.step) +
                             ".lfpckpt";
    training::save_checkpoint((root / "checkpoints" / name).string(), c);
  };

  json reports = json::array();
  auto report_json = [](const training::StageReport& r) {
    return json{{"stage", r.stage},
                {"trainable", r.trainable},
                {"steps", r.steps},
                {"frozen_unchanged", r.frozen_unchanged()},
                {"moments_zero_at_start", r.moments_zero_at_start},
                {"first_epoch_loss", r.first_epoch_loss},
                {"last_epoch_loss", r.last_epoch_loss}};
  };

  training::Checkpoint init;
  if (!a.init.empty()) {
    init = training::load_checkpoint(a.init);
    training::restore(model.params(), init);
  } else {
    training::StageReport rep;
    init = training::pretrain_propagating(model, data, cfg.training, hooks, &rep);
    reports.push_back(report_json(rep));
    out << "pretrain: " << rep.steps << " steps, loss " << rep.first_epoch_loss << " -> "
        << rep.last_epoch_loss << "\n";
  }
  training::Checkpoint final_ckpt = init;
  if (!a.pretrain_only) {
    const training::TrainResult r = training::train_three_stage(model, data, cfg.training, init, hooks);
    for (const auto& s : r.stages) {
      reports.push_back(report_json(s));
      out << "stage " << s.stage << ": " << s.steps << " steps, loss " << s.first_epoch_loss
          << " -> " << s.last_epoch_loss << (s.frozen_unchanged() ? "" : " [frozen set changed]")
          << "\n";
    }
    final_ckpt = r.checkpoint;
  }
  training::save_checkpoint((root / "model.lfpckpt").string(), final_ckpt);
  io::write_text((root / "stages.json").string(), reports.dump(2) + "\n");
  out << "checkpoint " << (root / "model.lfpckpt").string() << "\n";
  return kOk;
}

struct InferArgs {
  std::string image, trimap, checkpoint, out, fg, bg;
  bool tta = false;
  std::optional<int> tile, overlap;
  std::string blend;
  bool sixteen_bit = false;
};

int cmd_infer(const config::AppConfig& cfg, const InferArgs& a, std::ostream& out) {
  const Image image = io::read_image(a.image);
  const Trimap trimap = io::read_trimap(a.trimap);
  if (image.height() != trimap.height() || image.width() != trimap.width()) {
    throw GeometryError("image is " + std::to_string(image.height()) + "x" +
                        std::to_string(image.width()) + " but trimap is " +
                        std::to_string(trimap.height()) + "x" + std::to_string(trimap.width()));
  }
  const training::Checkpoint ckpt = training::load_checkpoint(a.checkpoint);
  const ModelConfig mcfg =
      ckpt.config.empty() ? cfg.model() : config::resolve("", ckpt.config, {}).model();
  LfpModel model(mcfg, cfg.core.seed);
  training::restore(model.params(), ckpt);

  inference::InferenceConfig icfg = cfg.inference;
  if (a.tile) icfg.inner_side = *a.tile;
  if (a.overlap) icfg.overlap = *a.overlap;
  if (a.tta) icfg.tta = true;
  if (!a.blend.empty()) icfg.blend = inference::parse_blend(a.blend);
  if (icfg.workers == 0) icfg.workers = cfg.core.workers();
  icfg.validate();
  config::check_patch_side(mcfg, icfg.inner_side);

  const inference::NetworkTileModel net(model);
  const inference::InferenceResult r = inference::infer(image, trimap, net, icfg);
  io::write_alpha(a.out, r.alpha, a.sixteen_bit);
  if (!a.fg.empty()) io::write_color(a.fg, r.fg);
  if (!a.bg.empty()) io::write_color(a.bg, r.bg);
  config::AppConfig echo = cfg;
  echo.inference = icfg;
  write_config_echo(echo_path_for(a.out), echo);
  out << "tiles evaluated " << r.tiles_evaluated << ", skipped " << r.tiles_skipped
      << ", bisected " << r.tiles_bisected << "\n";
  return kOk;
}

json report_json(const metrics::MetricReport& r) {
  return json{{"sad", r.sad},          {"mse", r.mse},           {"grad", r.grad},
              {"conn", r.conn},        {"sad_raw", r.sad_raw},   {"mse_raw", r.mse_raw},
              {"grad_raw", r.grad_raw}, {"conn_raw", r.conn_raw}, {"unknown_pixels", r.unknown_pixels}};
}

int cmd_eval(const config::AppConfig& cfg, const std::string& pred_dir, const std::string& gt_dir,
             const std::string& trimap_dir, const std::string& out_path, std::ostream& out,
             std::ostream& err) {
  const auto preds = by_stem(pred_dir);
  const auto gts = by_stem(gt_dir);
  const auto tris = by_stem(trimap_dir);
  if (preds.empty()) throw DataError("no predictions under " + pred_dir);
  std::vector<std::string> stems;
  for (const auto& [stem, p] : preds) {
    if (!gts.count(stem)) throw DataError("no ground truth for '" + stem + "'");
    if (!tris.count(stem)) throw DataError("no trimap for '" + stem + "'");
    stems.push_back(stem);
  }
  std::vector<metrics::MetricReport> reports(stems.size());
  parallel_for(stems.size(), cfg.core.workers(), [&](std::size_t i) {
    const std::string& s = stems[i];
    reports[i] = metrics::evaluate(io::read_alpha(preds.at(s)), io::read_alpha(gts.at(s)),
                                   io::read_trimap(tris.at(s)));
  });
  json images = json::array();
  metrics::MetricReport mean;
  for (std::size_t i = 0; i < stems.size(); ++i) {
    const auto& r = reports[i];
    if (r.empty_region) err << "warning: '" << stems[i] << "' has no unknown pixels\n";
    json j = report_json(r);
    j["name"] = stems[i];
    images.push_back(std::move(j));
    mean.sad += r.sad;
    mean.mse += r.mse;
    mean.grad += r.grad;
    mean.conn += r.conn;
    mean.sad_raw += r.sad_raw;
    mean.mse_raw += r.mse_raw;
    mean.grad_raw += r.grad_raw;
    mean.conn_raw += r.conn_raw;
    mean.unknown_pixels += r.unknown_pixels;
  }
  const double n = static_cast<double>(stems.size());
  for (double* v : {&mean.sad, &mean.mse, &mean.grad, &mean.conn, &mean.sad_raw, &mean.mse_raw,
                    &mean.grad_raw, &mean.conn_raw}) {
    *v /= n;
  }
  json mj = report_json(mean);
  mj.erase("unknown_pixels");
  const json report{{"count", stems.size()}, {"images", images}, {"mean", mj}};
  io::write_text(out_path, report.dump(2) + "\n");
  write_config_echo(echo_path_for(out_path), cfg);
  out << "mean over " << stems.size() << ": SAD " << mean.sad << "  MSE " << mean.mse << "  Grad "
      << mean.grad << "  Conn " << mean.conn << "\n";
  return kOk;
}

int exit_code_for(const Error& e) { return e.exit_code(); }

}  // namespace

bool CheckResult::passed() const {
  for (const auto& p : properties) {
    if (!p.passed) return false;
  }
  return !properties.empty();
}

void write_config_echo(const std::string& path, const config::AppConfig& cfg) {
  io::write_text(path, config::to_json(cfg) + "\n");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trimap-based image matting toolkit", "lfp"};
  app.fallthrough();
  app.allow_extras();

  std::string preset_name, config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  app.add_option("--preset", preset_name, "tiny, small or paper");
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--set", overrides, "override as dotted.key=value (repeatable)");
  app.add_option("--seed", seed, "run seed (core.seed)");

  auto* gen = app.add_subcommand("generate", "write synthetic training samples");
  std::string gen_out, gen_data;
  int gen_count = 0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "number of samples (default datagen.samples)");
  gen->add_option("--data", gen_data, "asset folder with fg/, alpha/, bg/ (default: procedural)");

  auto* ana = app.add_subcommand("analyze", "unknown-pixel distance statistics");
  std::string ana_dataset, ana_out, ana_plot;
  ana->add_option("--dataset", ana_dataset, "directory with trimap/ and alpha/")->required();
  ana->add_option("--out", ana_out, "statistics JSON")->required();
  ana->add_option("--plot", ana_plot, "cumulative distance plot (PNG)");

  auto* tr = app.add_subcommand("train", "propagating pretraining and the three-stage schedule");
  TrainArgs ta;
  tr->add_option("--data", ta.data, "asset folder (default: procedural)");
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->add_option("--init", ta.init, "start from this checkpoint and skip pretraining");
  tr->add_flag("--pretrain-only", ta.pretrain_only, "stop after propagating pretraining");

  auto* inf = app.add_subcommand("infer", "tiled inference on one image");
  InferArgs ia;
  inf->add_option("--image", ia.image)->required();
  inf->add_option("--trimap", ia.trimap)->required();
  inf->add_option("--checkpoint", ia.checkpoint)->required();
  inf->add_option("--out", ia.out, "alpha PNG")->required();
  inf->add_option("--fg", ia.fg, "foreground PNG");
  inf->add_option("--bg", ia.bg, "background PNG");
  inf->add_flag("--tta", ia.tta, "average over flips");
  inf->add_option("--tile", ia.tile, "inner tile side");
  inf->add_option("--overlap", ia.overlap, "tile overlap in pixels");
  inf->add_option("--blend", ia.blend, "none or linear-ramp");
  inf->add_flag("--sixteen-bit", ia.sixteen_bit, "write a 16-bit alpha");

  auto* ev = app.add_subcommand("eval", "SAD, MSE, Grad and Conn over a folder");
  std::string ev_pred, ev_gt, ev_tri, ev_out;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--trimaps", ev_tri)->required();
  ev->add_option("--out", ev_out, "report JSON")->required();

  auto* chk = app.add_subcommand("check", "gradient and oracle self-test suite");
  std::string chk_out = "lfp-check";
  chk->add_option("--out", chk_out, "directory for check.log and check.lfpckpt");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  }
  const std::vector<std::string> extra = app.remaining();
  if (app.get_subcommands().empty()) {
    err << "error: " << (extra.empty() ? "a command is required" : "unknown command '" + extra.front() + "'")
        << "\n" << app.help();
    return kUsage;
  }
  if (!extra.empty()) {
    err << "error: unexpected argument '" << extra.front() << "'\n" << app.help();
    return kUsage;
  }

  try {
    if (seed) overrides.push_back("core.seed=" + std::to_string(*seed));
    const config::AppConfig cfg = config::load(preset_name, config_path, overrides);
    if (*gen) return cmd_generate(cfg, gen_out, gen_count, gen_data, out);
    if (*ana) return cmd_analyze(cfg, ana_dataset, ana_out, ana_plot, out);
    if (*tr) return cmd_train(cfg, ta, out);
    if (*inf) return cmd_infer(cfg, ia, out);
    if (*ev) return cmd_eval(cfg, ev_pred, ev_gt, ev_tri, ev_out, out, err);
    if (*chk) {
      const CheckResult r = run_check(cfg, chk_out, out);
      return r.passed() ? kOk : kCheckFailed;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  return kUsage;
}

}  // namespace lfp::app
