#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "lfp/config.hpp"
#include "lfp/training.hpp"
#include <json.hpp>
#include <unistd.h>

namespace lfp::training {
namespace {

using lfp::testing::Rng;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() /
          ("lfp_train_" + std::to_string(::getpid()) + "_" + name))
      .string();
}

TEST(RAdam, MatchesHandComputationOnScalar) {
  ParamStore store;
  nn::Var w = store.create("w", {1}, nn::Init::Zeros);
  w.mutable_value()[0] = 1.5;
  RAdamConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.01;
  c.beta1 = 0.5;
  c.beta2 = 0.9;
  RAdam opt(store, c);

  // Reference: the rectified update written out step by step.
  double p = 1.5, m = 0, v = 0;
  const double rho_inf = 2 / (1 - c.beta2) - 1;
  for (int t = 1; t <= 12; ++t) {
    const double g = 0.3 * t - 1.0;  // varying gradient
    w.zero_grad();
    w.node()->grad_buffer()[0] = g;
    opt.step();

    const double gi = g + c.weight_decay * p;
    m = c.beta1 * m + (1 - c.beta1) * gi;
    v = c.beta2 * v + (1 - c.beta2) * gi * gi;
    const double mhat = m / (1 - std::pow(c.beta1, t));
    const double b2t = std::pow(c.beta2, t);
    const double rho = rho_inf - 2 * t * b2t / (1 - b2t);
    if (rho > 5) {
      const double r = std::sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho));
      p -= c.lr * r * mhat * std::sqrt(1 - b2t) / (std::sqrt(v) + c.eps);
    } else {
      p -= c.lr * mhat;
    }
    EXPECT_NEAR(w.value()[0], p, 1e-14) << "step " << t;
  }
  EXPECT_EQ(opt.steps(), 12);
  EXPECT_FALSE(opt.moments_zero());
  opt.reset();
  EXPECT_TRUE(opt.moments_zero());
  EXPECT_EQ(opt.steps(), 0);
}

TEST(RAdam, FirstStepIsPlainMomentumStep) {
  ParamStore store;
  nn::Var w = store.create("w", {3}, nn::Init::Zeros);
  RAdamConfig c;
  c.lr = 0.25;
  c.weight_decay = 0;
  RAdam opt(store, c);
  w.zero_grad();
  for (int i = 0; i < 3; ++i) w.node()->grad_buffer()[i] = i - 1.0;
  opt.step();
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w.value()[i], -0.25 * (i - 1.0));
}

TEST(RAdam, FrozenParametersUntouched) {
  ParamStore store;
  nn::Var a = store.create("a", {2}, nn::Init::Ones);
  nn::Var b = store.create("b", {2}, nn::Init::Ones);
  nn::initialize_parameters(store, 1);
  store.set_trainable([](const std::string& n) { return n == "a"; });
  RAdam opt(store, {.lr = 0.1});
  for (nn::Var* v : {&a, &b}) {
    v->zero_grad();
    v->node()->grad_buffer()[0] = 1.0;
  }
  opt.step();
  EXPECT_NE(a.value()[0], 1.0);
  EXPECT_EQ(b.value()[0], 1.0);
}

TEST(RAdamConfig, Validation) {
  RAdamConfig c;
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RAdamConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

ModelConfig tiny_model() { return config::preset("tiny").model(); }

TEST(Checkpoint, FileRoundTripIsExact) {
  LfpModel model(tiny_model(), 3);
  RAdam opt(model.params(), {});
  Rng r(3);
  const auto ts = lfp::testing::random_training_sample(r, 64);
  model.params().set_trainable(stage_filter(3));
  train_step(model, opt, ts, 3, config::preset("tiny").training);
  const Checkpoint c = capture(model.params(), &opt, 3, 1, R"({"preset":"tiny"})");
  const std::string path = temp_path("rt.lfpckpt");
  save_checkpoint(path, c);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.optim_step, 1);
  EXPECT_EQ(back.config, R"({"preset":"tiny"})");

  // Truncation and foreign files are data errors; a missing file is an I/O error.
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::ofstream(path, std::ios::trunc) << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, RestoreRejectsMismatchedModel) {
  LfpModel a(tiny_model(), 1);
  ModelConfig other = tiny_model();
  other.matting.fusion_channels = 8;
  LfpModel b(other, 1);
  EXPECT_THROW(restore(b.params(), capture(a.params(), nullptr, 0, 0, "")), DataError);
  LfpModel c(tiny_model(), 2);
  restore(c.params(), capture(a.params(), nullptr, 0, 0, ""));
  const auto all = [](const std::string&) { return true; };
  EXPECT_EQ(parameter_hash(c.params(), all), parameter_hash(a.params(), all));
}

TEST(ParameterHash, SeesEveryByteOfSelection) {
  LfpModel m(tiny_model(), 4);
  const auto prop = stage_filter(0);
  const auto mat = stage_filter(1);
  const auto hp = parameter_hash(m.params(), prop), hm = parameter_hash(m.params(), mat);
  m.params().at("matting.head.out.bias").mutable_value()[0] += 1e-300;
  EXPECT_EQ(parameter_hash(m.params(), prop), hp);
  EXPECT_NE(parameter_hash(m.params(), mat), hm);
}

TEST(StageFilter, TrainableSets) {
  LfpModel m(tiny_model(), 5);
  std::size_t n[4] = {0, 0, 0, 0};
  for (const auto& e : m.params().entries()) {
    for (int s = 0; s < 4; ++s) n[s] += stage_filter(s)(e.name);
    const bool prop = e.name.rfind("propagating.", 0) == 0;
    EXPECT_EQ(stage_filter(0)(e.name), prop) << e.name;
    EXPECT_EQ(stage_filter(1)(e.name), !prop) << e.name;
    EXPECT_TRUE(stage_filter(3)(e.name));
    if (stage_filter(2)(e.name)) {
      EXPECT_TRUE(e.name.find(".decoder.") != std::string::npos || e.name.find(".head.") != std::string::npos ||
                  e.name.rfind("matting.fusion.", 0) == 0)
          << e.name;
    }
    if (e.name.find("encoder") != std::string::npos) EXPECT_FALSE(stage_filter(2)(e.name)) << e.name;
  }
  for (int s = 0; s < 4; ++s) EXPECT_GT(n[s], 0u);
  EXPECT_LT(n[2], n[3]);
  EXPECT_EQ(n[0] + n[1], n[3]);
  EXPECT_THROW(stage_filter(4), ParameterError);
}

TEST(StepRecord, JsonLineCarriesBreakdown) {
  LfpModel m(tiny_model(), 6);
  Rng r(6);
  const auto ts = lfp::testing::random_training_sample(r, 64);
  const StepRecord rec = evaluate_step(m, ts, 3, config::preset("tiny").training);
  const auto j = nlohmann::json::parse(to_json_line(rec));
  EXPECT_EQ(j.at("stage"), 3);
  for (const char* k : {"matting", "alpha", "fb", "fb_laplacian"}) {
    EXPECT_TRUE(j.at("losses").contains(k)) << k;
    EXPECT_GE(rec.losses.at(k), 0.0);
  }
  EXPECT_DOUBLE_EQ(j.at("total").get<double>(), rec.total);
}

std::vector<datagen::TrainingSample> desk_data(const config::AppConfig& cfg, int n) {
  const auto assets = datagen::procedural_assets(cfg.core.seed, cfg.datagen.procedural_fg,
                                                 cfg.datagen.procedural_bg, cfg.datagen.procedural_side);
  std::vector<datagen::TrainingSample> data;
  for (int i = 0; i < n; ++i) data.push_back(datagen::generate_sample(assets, cfg.datagen.augment, cfg.core.seed, i));
  return data;
}

double mean_matting_loss(const LfpModel& m, const std::vector<datagen::TrainingSample>& data, const TrainConfig& tc) {
  double s = 0;
  for (const auto& ts : data) s += evaluate_step(m, ts, 3, tc).losses.at("matting");
  return s / static_cast<double>(data.size());
}

TEST(Schedule, ZeroEpochsReturnInitialParameters) {
  auto cfg = config::preset("tiny");
  cfg.training.stage_epochs = {0, 0, 0};
  LfpModel m(cfg.model(), 7);
  const auto data = desk_data(cfg, 2);
  const Checkpoint init = capture(m.params(), nullptr, 0, 0, "");
  const TrainResult res = train_three_stage(m, data, cfg.training, init);
  EXPECT_EQ(res.checkpoint.params, init.params);
  EXPECT_THROW(train_three_stage(m, {}, cfg.training, init), DataError);
}

TEST(Schedule, DeskRunReducesLossAndRespectsFrozenSets) {
  auto cfg = config::preset("tiny");
  cfg.training.stage_epochs = {2, 1, 1};
  LfpModel m(cfg.model(), cfg.core.seed);
  const auto data = desk_data(cfg, 6);
  const double before = mean_matting_loss(m, data, cfg.training);
  std::vector<StepRecord> log;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { log.push_back(r); };
  StageReport pre;
  const Checkpoint init = pretrain_propagating(m, data, cfg.training, hooks, &pre);
  EXPECT_TRUE(pre.frozen_unchanged());
  EXPECT_TRUE(pre.moments_zero_at_start);
  const TrainResult res = train_three_stage(m, data, cfg.training, init, hooks);
  ASSERT_EQ(res.stages.size(), 3u);
  for (const auto& s : res.stages) {
    EXPECT_TRUE(s.frozen_unchanged()) << s.stage;
    EXPECT_TRUE(s.moments_zero_at_start) << s.stage;
  }
  EXPECT_EQ(log.size(), 6u * (1 + 2 + 1 + 1));
  for (const auto& r : log) EXPECT_TRUE(std::isfinite(r.total));
  const double after = mean_matting_loss(m, data, cfg.training);
  EXPECT_LT(after, before);
  std::cout << "desk run matting loss " << before << " -> " << after << "\n";
}

TEST(Schedule, ResumeGivesIdenticalNextStep) {
  auto cfg = config::preset("tiny");
  const auto data = desk_data(cfg, 3);
  LfpModel a(cfg.model(), 8);
  a.params().set_trainable(stage_filter(3));
  RAdam opt_a(a.params(), cfg.training.optimizer);
  for (int i = 0; i < 3; ++i) train_step(a, opt_a, data[i], 3, cfg.training);
  const std::string path = temp_path("resume.lfpckpt");
  save_checkpoint(path, capture(a.params(), &opt_a, 3, 3, ""));
  const StepRecord next_a = train_step(a, opt_a, data[0], 3, cfg.training);
  const StepRecord after_a = train_step(a, opt_a, data[1], 3, cfg.training);

  LfpModel b(cfg.model(), 99);
  b.params().set_trainable(stage_filter(3));
  RAdam opt_b(b.params(), cfg.training.optimizer);
  restore(b.params(), load_checkpoint(path), &opt_b);
  std::filesystem::remove(path);
  EXPECT_EQ(opt_b.steps(), 3);
  const StepRecord next_b = train_step(b, opt_b, data[0], 3, cfg.training);
  const StepRecord after_b = train_step(b, opt_b, data[1], 3, cfg.training);
  EXPECT_EQ(next_a.total, next_b.total);
  EXPECT_EQ(after_a.total, after_b.total);
}

}  // namespace
}  // namespace lfp::training
