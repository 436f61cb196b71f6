#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lfp/datagen.hpp"
#include "lfp/losses.hpp"
#include "lfp/model.hpp"

namespace lfp::training {

using nn::ParamStore;
using nn::Tensor;

struct RAdamConfig {
  double lr = 1e-5;
  double weight_decay = 1e-5;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Rectified Adam with L2 weight decay folded into the gradient. Only
/// parameters with requires_grad set are touched.
class RAdam {
 public:
  RAdam(ParamStore& store, RAdamConfig cfg);

  void step();
  /// Drops all moment estimates and the step counter.
  void reset();

  std::int64_t steps() const { return t_; }
  const RAdamConfig& config() const { return cfg_; }
  /// True when every first and second moment entry is exactly zero.
  bool moments_zero() const;

  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  void set_state(std::int64_t t, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v);

 private:
  ParamStore& store_;
  RAdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

struct Checkpoint {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> optim_m;
  std::map<std::string, Tensor> optim_v;
  std::int64_t optim_step = 0;
  std::string config;
  int stage = 0;  // 0: propagating pretraining, 1..3: schedule stages
  std::int64_t step = 0;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint capture(const ParamStore& store, const RAdam* opt, int stage, std::int64_t step,
                   const std::string& config);
/// Copies parameters (and optimizer state when given) back; names and
/// shapes must match exactly.
void restore(ParamStore& store, const Checkpoint& c, RAdam* opt = nullptr);

/// "LFPCKPT1", a little-endian u64 header length, a JSON header, then the
/// raw doubles of every array in header order.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a over the names and raw bytes of the selected parameters.
std::uint64_t parameter_hash(const ParamStore& store,
                             const std::function<bool(const std::string&)>& select);

/// Trainable set of a stage: 0 propagating pretraining, 1 matting module,
/// 2 both decoders and heads plus the fusion projection, 3 everything.
std::function<bool(const std::string&)> stage_filter(int stage);

struct TrainConfig {
  RAdamConfig optimizer;
  int pretrain_epochs = 1;
  std::array<int, 3> stage_epochs{35, 10, 5};
  losses::LossConfig loss;
  double propagating_weight = 1.0;
  bool shuffle = true;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // steps; 0 writes only at stage ends

  void validate() const;
};

/// Loss breakdown of one optimizer step.
struct StepRecord {
  int stage = 0;
  int epoch = 0;
  std::int64_t step = 0;
  std::size_t sample = 0;
  std::map<std::string, double> losses;
  double total = 0.0;
};

std::string to_json_line(const StepRecord& r);

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::string config_snapshot;
};

/// Forward pass and loss of one sample for the given stage (no update).
StepRecord evaluate_step(const LfpModel& model, const datagen::TrainingSample& s, int stage,
                         const TrainConfig& cfg, nn::Var* total = nullptr);

/// Forward, backward and one optimizer update.
StepRecord train_step(LfpModel& model, RAdam& opt, const datagen::TrainingSample& s, int stage,
                      const TrainConfig& cfg);

struct StageReport {
  int stage = 0;
  std::size_t trainable = 0;
  std::uint64_t frozen_hash_before = 0;
  std::uint64_t frozen_hash_after = 0;
  bool moments_zero_at_start = false;
  std::int64_t steps = 0;
  double first_epoch_loss = 0.0;  // mean total loss
  double last_epoch_loss = 0.0;

  bool frozen_unchanged() const { return frozen_hash_before == frozen_hash_after; }
};

/// Runs `epochs` passes of one stage with a freshly reset optimizer.
StageReport run_stage(LfpModel& model, RAdam& opt, const std::vector<datagen::TrainingSample>& data,
                      int stage, int epochs, const TrainConfig& cfg, const TrainHooks& hooks);

/// Optimises the propagating loss alone over propagating.* parameters.
Checkpoint pretrain_propagating(LfpModel& model, const std::vector<datagen::TrainingSample>& data,
                                const TrainConfig& cfg, const TrainHooks& hooks = {},
                                StageReport* report = nullptr);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StageReport> stages;
};

/// Stages 1..3 starting from `init` (which should carry pretrained
/// propagating parameters).
TrainResult train_three_stage(LfpModel& model, const std::vector<datagen::TrainingSample>& data,
                              const TrainConfig& cfg, const Checkpoint& init,
                              const TrainHooks& hooks = {});

}  // namespace lfp::training
