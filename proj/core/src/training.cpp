#include "lfp/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "lfp/errors.hpp"

namespace lfp::training {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little endian");

using nlohmann::json;

void RAdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("training.optimizer.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("training.optimizer.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("training.optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("training.optimizer.eps must be > 0");
}

RAdam::RAdam(ParamStore& store, RAdamConfig cfg) : store_(store), cfg_(cfg) {
  cfg_.validate();
  reset();
}

void RAdam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
  for (const auto& e : store_.entries()) {
    m_.emplace(e.name, Tensor(e.var.shape()));
    v_.emplace(e.name, Tensor(e.var.shape()));
  }
}

bool RAdam::moments_zero() const {
  auto zero = [](const std::map<std::string, Tensor>& s) {
    return std::all_of(s.begin(), s.end(), [](const auto& kv) {
      const auto v = kv.second.values();
      return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    });
  };
  return zero(m_) && zero(v_);
}

void RAdam::set_state(std::int64_t t, std::map<std::string, Tensor> m,
                      std::map<std::string, Tensor> v) {
  for (const auto& e : store_.entries()) {
    const auto im = m.find(e.name), iv = v.find(e.name);
    if (im == m.end() || iv == v.end() || im->second.shape() != e.var.shape() ||
        iv->second.shape() != e.var.shape()) {
      throw DataError("optimizer state does not match parameter " + e.name);
    }
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void RAdam::step() {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double t = static_cast<double>(t_);
  const double bc1 = 1.0 - std::pow(b1, t);
  const double b2t = std::pow(b2, t);
  const double bc2 = 1.0 - b2t;
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = rho_inf - 2.0 * t * b2t / bc2;
  const bool rectify = rho_t > 5.0;
  const double r = rectify ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                           : 0.0;
  for (auto& e : store_.entries()) {
    if (!e.var.requires_grad() || e.var.grad().empty()) continue;
    Tensor& p = e.var.mutable_value();
    const Tensor& g = e.var.grad();
    Tensor& m = m_.at(e.name);
    Tensor& v = v_.at(e.name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + cfg_.weight_decay * p[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / bc1;
      if (rectify) {
        const double adaptive = std::sqrt(bc2) / (std::sqrt(v[i]) + cfg_.eps);
        p[i] -= cfg_.lr * mhat * r * adaptive;
      } else {
        p[i] -= cfg_.lr * mhat;
      }
    }
  }
}

Checkpoint capture(const ParamStore& store, const RAdam* opt, int stage, std::int64_t step,
                   const std::string& config) {
  Checkpoint c;
  for (const auto& e : store.entries()) c.params.emplace(e.name, e.var.value());
  if (opt) {
    c.optim_m = opt->first_moments();
    c.optim_v = opt->second_moments();
    c.optim_step = opt->steps();
  }
  c.config = config;
  c.stage = stage;
  c.step = step;
  return c;
}

void restore(ParamStore& store, const Checkpoint& c, RAdam* opt) {
  if (c.params.size() != store.entries().size()) {
    throw DataError("checkpoint holds " + std::to_string(c.params.size()) +
                    " parameters, model has " + std::to_string(store.entries().size()));
  }
  for (auto& e : store.entries()) {
    const auto it = c.params.find(e.name);
    if (it == c.params.end()) throw DataError("checkpoint lacks parameter " + e.name);
    if (it->second.shape() != e.var.shape()) {
      throw DataError("checkpoint parameter " + e.name + " has shape " +
                      it->second.shape_string() + ", model expects " +
                      e.var.value().shape_string());
    }
  }
  for (auto& e : store.entries()) e.var.mutable_value() = c.params.at(e.name);
  if (opt) {
    if (c.optim_m.empty()) {
      opt->reset();
    } else {
      opt->set_state(c.optim_step, c.optim_m, c.optim_v);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'L', 'F', 'P', 'C', 'K', 'P', 'T', '1'};

struct ArrayRef {
  std::string group;
  std::string name;
  const Tensor* tensor;
};

std::vector<ArrayRef> arrays_of(const Checkpoint& c) {
  std::vector<ArrayRef> out;
  for (const auto& [n, t] : c.params) out.push_back({"param", n, &t});
  for (const auto& [n, t] : c.optim_m) out.push_back({"optim.m", n, &t});
  for (const auto& [n, t] : c.optim_v) out.push_back({"optim.v", n, &t});
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  json h;
  h["stage"] = c.stage;
  h["step"] = c.step;
  h["optim_step"] = c.optim_step;
  h["config"] = c.config;
  json arr = json::array();
  const auto arrays = arrays_of(c);
  for (const auto& a : arrays) {
    arr.push_back({{"group", a.group}, {"name", a.name}, {"shape", a.tensor->shape()}});
  }
  h["arrays"] = arr;
  const std::string header = h.dump();

  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t n = header.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& a : arrays) {
    out.write(reinterpret_cast<const char*>(a.tensor->data()),
              static_cast<std::streamsize>(a.tensor->size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path + " is not a checkpoint file");
  }
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1u << 30)) throw DataError(path + ": corrupt checkpoint header");
  std::string header(n, '\0');
  in.read(header.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError(path + ": truncated checkpoint header");
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  }
  Checkpoint c;
  try {
    c.stage = h.at("stage").get<int>();
    c.step = h.at("step").get<std::int64_t>();
    c.optim_step = h.at("optim_step").get<std::int64_t>();
    c.config = h.at("config").get<std::string>();
    for (const auto& a : h.at("arrays")) {
      const std::string group = a.at("group").get<std::string>();
      Tensor t(a.at("shape").get<std::vector<int>>());
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in) throw DataError(path + ": truncated checkpoint data");
      auto& dst = group == "param" ? c.params : group == "optim.m" ? c.optim_m : c.optim_v;
      if (group != "param" && group != "optim.m" && group != "optim.v") {
        throw DataError(path + ": unknown array group " + group);
      }
      dst.emplace(a.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  }
  return c;
}

std::uint64_t parameter_hash(const ParamStore& store,
                             const std::function<bool(const std::string&)>& select) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& e : store.entries()) {
    if (!select(e.name)) continue;
    mix(e.name.data(), e.name.size());
    mix(e.var.value().data(), e.var.value().size() * sizeof(double));
  }
  return h;
}

std::function<bool(const std::string&)> stage_filter(int stage) {
  auto starts = [](const std::string& s, const char* p) { return s.rfind(p, 0) == 0; };
  switch (stage) {
    case 0:
      return [starts](const std::string& n) { return starts(n, "propagating."); };
    case 1:
      return [starts](const std::string& n) { return starts(n, "matting."); };
    case 2:
      return [starts](const std::string& n) {
        return starts(n, "propagating.decoder.") || starts(n, "propagating.head.") ||
               starts(n, "matting.decoder.") || starts(n, "matting.head.") ||
               starts(n, "matting.fusion.");
      };
    case 3:
      return [](const std::string&) { return true; };
    default:
      throw ParameterError("stage must be 0..3, got " + std::to_string(stage));
  }
}

void TrainConfig::validate() const {
  optimizer.validate();
  loss.validate();
  if (pretrain_epochs < 0) throw ConfigError("training.pretrain_epochs must be >= 0");
  for (int e : stage_epochs) {
    if (e < 0) throw ConfigError("training.stage_epochs must be >= 0");
  }
  if (propagating_weight < 0.0) throw ConfigError("training.propagating_weight must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("training.checkpoint_every must be >= 0");
}

std::string to_json_line(const StepRecord& r) {
  json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["sample"] = r.sample;
  j["losses"] = r.losses;
  j["total"] = r.total;
  return j.dump();
}

StepRecord evaluate_step(const LfpModel& model, const datagen::TrainingSample& s, int stage,
                         const TrainConfig& cfg, nn::Var* total) {
  StepRecord rec;
  rec.stage = stage;
  const nn::Var ctx = nn::Var::constant(
      propagating::network_input(s.context.image, s.context.trimap));
  nn::Var loss;
  auto add_propagating = [&](const nn::Var& context_alpha) {
    const losses::Term lp =
        losses::propagating_loss(context_alpha, s.context_alpha_gt.tensor(), s.context.trimap);
    rec.losses["propagating"] = lp.item();
    return lp.value;
  };
  if (stage == 0) {
    loss = add_propagating(model.propagate(ctx).context_alpha);
  } else {
    const nn::Var inner =
        nn::Var::constant(propagating::network_input(s.inner.image, s.inner.trimap));
    const ModelOutput out = model.forward(inner, ctx);
    const losses::MattingLoss lm = losses::matting_loss(out.matting, s.inner, cfg.loss);
    rec.losses["alpha_weighted"] = lm.alpha.weighted.item();
    rec.losses["alpha_composite"] = lm.alpha.composite.item();
    rec.losses["alpha_laplacian"] = lm.alpha.laplacian.value().item();
    rec.losses["alpha"] = lm.alpha.total.value().item();
    rec.losses["fb_reconstruction"] = lm.fb_reconstruction.item();
    rec.losses["fb_composite"] = lm.fb_composite.item();
    rec.losses["fb_laplacian"] = lm.fb_laplacian.value().item();
    rec.losses["fb"] = lm.fb_total.value().item();
    rec.losses["matting"] = lm.total.value().item();
    loss = lm.total;
    if (stage >= 2 && cfg.propagating_weight > 0.0) {
      const nn::Var c = out.context.context_alpha.defined() ? out.context.context_alpha
                                                             : model.propagate(ctx).context_alpha;
      loss = nn::add(loss, nn::scale(add_propagating(c), cfg.propagating_weight));
    }
  }
  rec.total = loss.value().item();
  if (total) *total = loss;
  return rec;
}

StepRecord train_step(LfpModel& model, RAdam& opt, const datagen::TrainingSample& s, int stage,
                      const TrainConfig& cfg) {
  model.params().zero_grad();
  nn::Var loss;
  StepRecord rec = evaluate_step(model, s, stage, cfg, &loss);
  if (!std::isfinite(rec.total)) throw DataError("training loss is not finite");
  if (loss.requires_grad()) {
    nn::backward(loss);
    opt.step();
  }
  rec.step = opt.steps();
  return rec;
}

StageReport run_stage(LfpModel& model, RAdam& opt, const std::vector<datagen::TrainingSample>& data,
                      int stage, int epochs, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw DataError("training needs at least one sample");
  const auto select = stage_filter(stage);
  StageReport rep;
  rep.stage = stage;
  rep.trainable = model.params().set_trainable(select);
  if (rep.trainable == 0) {
    throw ConfigError("stage " + std::to_string(stage) + " matches no parameters");
  }
  const auto frozen = [&select](const std::string& n) { return !select(n); };
  rep.frozen_hash_before = parameter_hash(model.params(), frozen);
  opt.reset();
  rep.moments_zero_at_start = opt.moments_zero();

  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(
                                          (stage + 1) * 1000003 + epoch)));
      // Fisher-Yates by hand: std::shuffle is not specified across libraries.
      for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
      }
    }
    double sum = 0.0;
    for (std::size_t k : order) {
      StepRecord rec = train_step(model, opt, data[k], stage, cfg);
      rec.epoch = epoch;
      rec.sample = k;
      sum += rec.total;
      ++rep.steps;
      if (hooks.on_step) hooks.on_step(rec);
      if (hooks.on_checkpoint && cfg.checkpoint_every > 0 &&
          rep.steps % cfg.checkpoint_every == 0) {
        hooks.on_checkpoint(capture(model.params(), &opt, stage, rep.steps, hooks.config_snapshot));
      }
    }
    const double mean = sum / static_cast<double>(data.size());
    if (epoch == 0) rep.first_epoch_loss = mean;
    rep.last_epoch_loss = mean;
  }
  rep.frozen_hash_after = parameter_hash(model.params(), frozen);
  model.params().set_trainable([](const std::string&) { return true; });
  model.params().zero_grad();
  return rep;
}

Checkpoint pretrain_propagating(LfpModel& model, const std::vector<datagen::TrainingSample>& data,
                                const TrainConfig& cfg, const TrainHooks& hooks,
                                StageReport* report) {
  if (data.empty()) throw DataError("propagating pretraining needs at least one sample");
  RAdam opt(model.params(), cfg.optimizer);
  StageReport rep = run_stage(model, opt, data, 0, cfg.pretrain_epochs, cfg, hooks);
  if (report) *report = rep;
  Checkpoint c = capture(model.params(), &opt, 0, rep.steps, hooks.config_snapshot);
  if (hooks.on_checkpoint) hooks.on_checkpoint(c);
  return c;
}

TrainResult train_three_stage(LfpModel& model, const std::vector<datagen::TrainingSample>& data,
                              const TrainConfig& cfg, const Checkpoint& init,
                              const TrainHooks& hooks) {
  restore(model.params(), init);
  RAdam opt(model.params(), cfg.optimizer);
  TrainResult r;
  for (int stage = 1; stage <= 3; ++stage) {
    r.stages.push_back(
        run_stage(model, opt, data, stage, cfg.stage_epochs[static_cast<std::size_t>(stage - 1)],
                  cfg, hooks));
    r.checkpoint = capture(model.params(), &opt, stage, r.stages.back().steps,
                           hooks.config_snapshot);
    if (hooks.on_checkpoint) hooks.on_checkpoint(r.checkpoint);
  }
  return r;
}

}  // namespace lfp::training
