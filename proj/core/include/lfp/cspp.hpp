#pragma once

#include <string>
#include <vector>

#include "lfp/nn/layers.hpp"

namespace lfp::cspp {

using nn::Var;

enum class Variant { None, NonLocal, Aspp, Cspp };
enum class UpsampleMode { Bilinear, Nearest };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct CsppConfig {
  std::vector<int> csp_grids{1, 2, 3, 6};
  /// 0 selects in_channels / 4.
  int csp_branch_channels = 0;
  std::vector<int> aspp_rates{3, 7, 12, 18};
  int aspp_branch_channels = 32;
  int fuse_channels = 32;
  /// 1x1 projection after the six-branch concatenation. When off the
  /// bottleneck emits 6 * aspp_branch_channels channels.
  bool fusion_projection = true;
  UpsampleMode upsample = UpsampleMode::Bilinear;
  /// Drops every normalisation and nonlinearity so the branches become
  /// linear operators (biases start at zero).
  bool linear = false;

  void validate() const;
};

/// Block-wise average pooling onto a grid x grid map; block boundaries at
/// round(k * H / grid) and round(k * W / grid).
Var csp_pool(const Var& f, int grid);

/// Multi-grid centre-surround pooling: pooled cells are projected by 1x1
/// convolutions, upsampled back and concatenated after the input.
class CenterSurroundPooling {
 public:
  CenterSurroundPooling() = default;
  CenterSurroundPooling(nn::ParamStore& store, const std::string& prefix, int in_channels,
                        const CsppConfig& cfg);

  Var forward(const Var& f) const;
  int in_channels() const { return in_; }
  int out_channels() const { return in_ + static_cast<int>(branches_.size()) * branch_channels_; }
  int branch_channels() const { return branch_channels_; }

 private:
  CsppConfig cfg_;
  int in_ = 0;
  int branch_channels_ = 0;
  std::vector<nn::ConvUnit> branches_;
};

/// Atrous spatial pyramid pooling: 1x1, image pooling and four dilated 3x3
/// branches, concatenated and optionally fused by a 1x1 projection.
class Aspp {
 public:
  Aspp() = default;
  Aspp(nn::ParamStore& store, const std::string& prefix, int in_channels, const CsppConfig& cfg);

  Var forward(const Var& f) const;
  /// Concatenated branch maps before the fusion projection.
  Var branches(const Var& f) const;
  int out_channels() const;
  int concat_channels() const { return branch_count() * cfg_.aspp_branch_channels; }
  int branch_count() const { return 2 + static_cast<int>(cfg_.aspp_rates.size()); }

 private:
  CsppConfig cfg_;
  int in_ = 0;
  nn::ConvUnit point_;
  nn::ConvUnit image_pool_;
  std::vector<nn::ConvUnit> dilated_;
  nn::ConvUnit fuse_;
};

/// Embedded-Gaussian self-attention over all spatial positions with a
/// residual connection.
class NonLocalBlock {
 public:
  NonLocalBlock() = default;
  NonLocalBlock(nn::ParamStore& store, const std::string& prefix, int in_channels);
  Var forward(const Var& f) const;

 private:
  nn::Projection theta_, phi_, g_, out_;
};

/// Propagating-module bottleneck in one of the ablation variants. Every
/// variant emits out_channels() maps at the input resolution.
class Bottleneck {
 public:
  Bottleneck() = default;
  Bottleneck(nn::ParamStore& store, const std::string& prefix, int in_channels, Variant variant,
             const CsppConfig& cfg);

  Var forward(const Var& f) const;
  Variant variant() const { return variant_; }
  int out_channels() const { return out_; }
  /// Whether an output cell may depend on inputs arbitrarily far away.
  bool is_global() const { return variant_ != Variant::None; }

  const CenterSurroundPooling& csp() const { return csp_; }
  const Aspp& aspp() const { return aspp_; }

 private:
  Variant variant_ = Variant::Cspp;
  int out_ = 0;
  nn::Projection projection_;
  NonLocalBlock nonlocal_;
  CenterSurroundPooling csp_;
  Aspp aspp_;
};

}  // namespace lfp::cspp
