#pragma once

#include <array>
#include <vector>

#include "lfp/nn/layers.hpp"
#include "lfp/propagating.hpp"

namespace lfp::matting {

using nn::Var;

/// Where context features enter the matting network.
enum class FusionPoint { None, Input, PrePpm, PostPpm };

std::string to_string(FusionPoint p);
FusionPoint parse_fusion_point(const std::string& s);

struct MattingConfig {
  std::array<int, 3> stem_widths{8, 8, 16};
  nn::BlockType block = nn::BlockType::Basic;
  std::array<int, 4> stage_widths{8, 16, 32, 64};
  std::array<int, 4> stage_blocks{1, 1, 1, 1};
  std::array<int, 4> strides{1, 2, 1, 1};
  std::array<int, 4> dilations{1, 1, 2, 4};
  FusionPoint fusion = FusionPoint::PrePpm;
  int fusion_channels = 16;
  std::vector<int> ppm_grids{1, 2, 3, 6};
  int ppm_channels = 16;
  std::array<int, 4> decoder_widths{32, 32, 16, 16};
  int head_width = 32;
  nn::NormKind norm = nn::NormKind::Group;

  void validate() const;
  int total_stride() const;
};

struct MattingOutput {
  Var alpha;  // [1, s, s]
  Var fg;     // [3, s, s]
  Var bg;     // [3, s, s]
  Var raw;    // [7, s, s], post-sigmoid
};

struct MattingTrace {
  Var input;
  Var stem;
  Var pooled;
  std::array<Var, 4> stages;
  Var context;  // projected context features at the fusion resolution
  Var fused;
  Var ppm;
  std::array<Var, 4> decoder;
  MattingOutput output;
};

/// Axis layout that resamples the inner window of the tapped context
/// features onto `out_size` cells.
nn::AxisMap context_window_axis(const propagating::FeatureGeometry& tap, int tap_size,
                                int inner_offset, int inner_side, int out_size);

class MattingModule {
 public:
  MattingModule() = default;
  MattingModule(nn::ParamStore& store, const MattingConfig& cfg, int context_channels);

  /// `input` is the six-channel inner patch; `ctx` may be null when the
  /// fusion point is None.
  MattingOutput forward(const Var& input, const propagating::PropagationOutput* ctx) const;
  MattingTrace trace(const Var& input, const propagating::PropagationOutput* ctx) const;

  /// Crops the inner window out of the tapped features, resamples it to
  /// size x size and applies the fusion projection.
  Var fuse_context(const propagating::PropagationOutput& ctx, int inner_side, int size) const;

  const MattingConfig& config() const { return cfg_; }

 private:
  MattingConfig cfg_;
  std::array<nn::ConvUnit, 3> stem_;
  std::array<std::vector<nn::ResidualBlock>, 4> stages_;
  nn::Projection fusion_;
  std::vector<nn::ConvUnit> ppm_branches_;
  nn::ConvUnit ppm_fuse_;
  std::array<nn::ResidualBlock, 4> decoder_;
  std::array<nn::ConvUnit, 2> head_;
  nn::Projection head_out_;
};

}  // namespace lfp::matting
