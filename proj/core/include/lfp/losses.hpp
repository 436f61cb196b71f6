#pragma once

#include <cstddef>
#include <vector>

#include "lfp/core.hpp"
#include "lfp/matting.hpp"
#include "lfp/nn/autograd.hpp"

namespace lfp::losses {

using nn::Tensor;
using nn::Var;

struct LossConfig {
  double lambda_alpha = 1.0;
  double lambda_fb = 0.25;
  double gamma = 5e4;
  int pyramid_levels = 4;
  /// Average the composite terms over T^U (otherwise over the whole patch).
  bool composite_unknown_only = true;
  /// Apply the Laplacian terms to the whole patch (otherwise to T^U only,
  /// by masking both operands before the pyramid).
  bool laplacian_full_patch = true;

  void validate() const;
};

/// A scalar loss term. `empty_region` flags a term that was defined as zero
/// because its averaging region had no pixels.
struct Term {
  Var value;
  bool empty_region = false;

  double item() const { return value.value().item(); }
};

/// max(1, sqrt(|T^U| / gamma)).
double unknown_weight(std::size_t unknown_count, double gamma);

/// Mean |C - C_gt| over the unknown pixels of the context trimap.
Term propagating_loss(const Var& context_alpha, const Tensor& context_alpha_gt,
                      const Trimap& context_trimap);

/// unknown_weight / |T^U| * sum over T^U of |alpha - alpha_gt|.
Term weighted_alpha_loss(const Var& alpha, const Tensor& alpha_gt, const Trimap& t,
                         double gamma);

/// |alpha F_gt + (1 - alpha) B_gt - I| summed over channels, averaged over
/// the region.
Term composite_loss(const Var& alpha, const Sample& s, bool unknown_only = true);

/// Band-pass levels 0..J-1 followed by the low-pass residual at level J.
std::vector<Var> laplacian_pyramid(const Var& x, int levels);
Var laplacian_reconstruct(const std::vector<Var>& pyramid);

/// sum_j 2^j * mean |L^j(x) - L^j(y)|, j = 0..J.
Var laplacian_loss(const Var& x, const Var& y, int levels);

struct AlphaLoss {
  Term weighted;
  Term composite;
  Var laplacian;
  Var total;
};
AlphaLoss alpha_loss(const Var& alpha, const Sample& s, const LossConfig& cfg);

/// Mean L1 of F over T^FU plus mean L1 of B over T^BU, channel sums per pixel.
Term fb_reconstruction_loss(const Var& fg, const Var& bg, const Sample& s);

/// |alpha_gt F + (1 - alpha_gt) B - I| summed over channels, averaged over
/// the region.
Term fb_composite_loss(const Var& fg, const Var& bg, const Sample& s, bool unknown_only = true);

/// Lap(F, F_gt) + Lap(B, B_gt).
Var fb_laplacian_loss(const Var& fg, const Var& bg, const Sample& s, int levels);

struct MattingLoss {
  AlphaLoss alpha;
  Term fb_reconstruction;
  Term fb_composite;
  Var fb_laplacian;
  Var fb_total;
  Var total;
  bool empty_region = false;
};

MattingLoss matting_loss(const matting::MattingOutput& out, const Sample& s,
                         const LossConfig& cfg);

}  // namespace lfp::losses
