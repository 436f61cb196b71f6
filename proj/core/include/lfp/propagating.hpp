#pragma once

#include <array>
#include <vector>

#include "lfp/cspp.hpp"
#include "lfp/geometry.hpp"
#include "lfp/nn/layers.hpp"

namespace lfp::propagating {

using nn::Var;

/// Feature cell u covers context pixels [offset + scale * u, offset + scale * (u + 1)).
struct FeatureGeometry {
  int scale = 1;
  int offset = 0;

  double pixel_center(int u) const { return offset + scale * (u + 0.5); }
  bool operator==(const FeatureGeometry&) const = default;
};

struct PropagatingConfig {
  int input_downsample_factor = 2;
  int stem_channels = 8;
  int stem_kernel = 7;
  nn::BlockType block = nn::BlockType::Basic;
  std::array<int, 4> stage_widths{8, 16, 32, 64};
  std::array<int, 4> stage_blocks{1, 1, 1, 1};
  std::array<int, 4> strides{1, 2, 1, 1};
  std::array<int, 4> dilations{1, 1, 2, 4};
  int block_kernel = 3;
  std::array<int, 4> decoder_widths{32, 16, 8, 8};
  int decoder_kernel = 3;
  int head_kernel = 3;
  /// Decoder stage (1..4) whose output is handed to the matting module.
  int tap_level = 3;
  nn::NormKind norm = nn::NormKind::Group;
  cspp::Variant variant = cspp::Variant::Cspp;
  cspp::CsppConfig bottleneck;

  void validate() const;
  /// Product of every spatial reduction between the context patch and the
  /// bottleneck.
  int total_stride() const;
};

/// Six-channel [6, H, W] network input: RGB followed by the one-hot trimap.
nn::Tensor network_input(const Image& image, const Trimap& trimap);

struct PropagationOutput {
  Var context_alpha;     // [1, 2s, 2s]
  Var context_features;  // tap_level decoder output
  FeatureGeometry tap_geometry;
};

/// Every intermediate map of one forward pass, for inspection and tests.
struct PropagationTrace {
  Var input;
  Var downsampled;
  Var stem;
  Var pooled;
  std::array<Var, 4> stages;
  Var bottleneck;
  std::array<Var, 4> decoder;
  PropagationOutput output;
};

class PropagatingModule {
 public:
  PropagatingModule() = default;
  PropagatingModule(nn::ParamStore& store, const PropagatingConfig& cfg);

  PropagationOutput forward(const Var& input) const;
  PropagationOutput forward(const ContextPair& pair) const;
  PropagationTrace trace(const Var& input) const;

  /// Bicubic reduction by input_downsample_factor.
  Var context_downsample(const Var& input) const;

  const PropagatingConfig& config() const { return cfg_; }
  const cspp::Bottleneck& bottleneck() const { return bottleneck_; }
  int tap_channels() const { return cfg_.decoder_widths[cfg_.tap_level - 1]; }
  FeatureGeometry tap_geometry() const;

 private:
  void check_input(const Var& input) const;

  PropagatingConfig cfg_;
  nn::ConvUnit stem_;
  std::array<std::vector<nn::ResidualBlock>, 4> stages_;
  cspp::Bottleneck bottleneck_;
  std::array<nn::ConvUnit, 4> decoder_;
  nn::ConvUnit head_;
};

/// Upper bound on how far, in context pixels from one border, a change of
/// the border pixel can reach in the tapped context features. Traced along
/// one axis through every stage with the exact tap layout of the forward
/// pass. Group normalisation or a global bottleneck couple every position,
/// in which case the full context side is returned.
int context_influence_extent(const PropagatingConfig& cfg, int context_side);

}  // namespace lfp::propagating
