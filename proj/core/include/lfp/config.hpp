#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfp/analysis.hpp"
#include "lfp/datagen.hpp"
#include "lfp/inference.hpp"
#include "lfp/losses.hpp"
#include "lfp/model.hpp"
#include "lfp/training.hpp"

namespace lfp::config {

struct CoreConfig {
  std::uint64_t seed = 0;
  /// Single worker everywhere; also switched on by LFP_DETERMINISTIC=1.
  bool deterministic = false;
  int threads = 0;  // 0: LFP_THREADS or the hardware concurrency

  unsigned workers() const;
};

struct DatagenConfig {
  datagen::AugmentConfig augment;
  int procedural_fg = 8;
  int procedural_bg = 8;
  int procedural_side = 96;
  int samples = 16;
  int queue_capacity = 8;
};

struct AnalysisConfig {
  double threshold = 0.5;
  double marker_px = 75.0;
};

struct AppConfig {
  std::string preset = "tiny";
  CoreConfig core;
  DatagenConfig datagen;
  propagating::PropagatingConfig propagating;
  matting::MattingConfig matting;
  losses::LossConfig losses;
  inference::InferenceConfig inference;
  training::TrainConfig training;
  AnalysisConfig analysis;

  ModelConfig model() const { return {propagating, matting}; }
  /// Section checks plus the cross-module patch-size constraints.
  void validate() const;
};

/// "tiny", "small" or "paper"; anything else is a ConfigError.
AppConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Throws GeometryError when an inner side s (context 2s) does not fit the
/// networks' strides and pooling grids.
void check_patch_side(const ModelConfig& m, int side);

/// Fully resolved configuration as pretty-printed JSON.
std::string to_json(const AppConfig& c);

/// Resolution order: preset <- file <- overrides. `preset_name` empty means
/// the file's "preset" key, else "tiny". Each override is "dotted.key=value"
/// with a JSON value (bare words are read as strings). Unknown keys and type
/// mismatches raise ConfigError naming the key path.
AppConfig resolve(const std::string& preset_name, const std::string& file_text,
                  const std::vector<std::string>& overrides);
AppConfig load(const std::string& preset_name, const std::string& path,
               const std::vector<std::string>& overrides);

}  // namespace lfp::config
