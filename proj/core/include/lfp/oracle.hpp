#pragma once

// Slow, direct reference computations. Nothing here calls into the
// implementation under test beyond the plain data types.

#include <cstdint>
#include <functional>
#include <vector>

#include "lfp/core.hpp"
#include "lfp/losses.hpp"
#include "lfp/nn/autograd.hpp"

namespace lfp::oracle {

using nn::Tensor;

/// Mirror without edge repetition, by repeated folding.
int mirror(int i, int n);

/// d_i = min over target pixels j of |i - j|, +inf when there is none.
std::vector<double> brute_distance(const Trimap& t, Label target);

/// Trimap by explicit k x k min filters over mirrored neighbourhoods.
Trimap min_filter_trimap(const AlphaMatte& alpha, int erode_k, int dilate_k);

/// Mean over the block [round(i H / g), round((i + 1) H / g)) x ..., [C, g, g].
Tensor block_mean(const Tensor& f, int grid);

/// Pyramid with dense 5x5 binomial kernels, mirror borders and per-output
/// weight normalisation; levels 0..J-1 band-pass, level J residual.
std::vector<Tensor> dense_laplacian_pyramid(const Tensor& x, int levels);
/// Per-level 2^j * mean |Lx_j - Ly_j|.
std::vector<double> dense_laplacian_terms(const Tensor& x, const Tensor& y, int levels);
double dense_laplacian_loss(const Tensor& x, const Tensor& y, int levels);

double propagating_loss(const Tensor& c, const Tensor& c_gt, const Trimap& t);
double weighted_alpha_loss(const Tensor& alpha, const Tensor& alpha_gt, const Trimap& t,
                           double gamma);
double composite_loss(const Tensor& alpha, const Sample& s, bool unknown_only);
double fb_reconstruction_loss(const Tensor& fg, const Tensor& bg, const Sample& s);
double fb_composite_loss(const Tensor& fg, const Tensor& bg, const Sample& s, bool unknown_only);
double fb_laplacian_loss(const Tensor& fg, const Tensor& bg, const Sample& s, int levels);
double matting_loss(const Tensor& alpha, const Tensor& fg, const Tensor& bg, const Sample& s,
                    const losses::LossConfig& cfg);

double sad(const AlphaMatte& p, const AlphaMatte& g, const Trimap& t);
double mse(const AlphaMatte& p, const AlphaMatte& g, const Trimap& t);
/// Separable Gaussian / derivative-of-Gaussian filtering with clamped borders.
double grad_error(const AlphaMatte& p, const AlphaMatte& g, const Trimap& t, double sigma = 1.4);
/// Per-threshold connected components by label propagation to a fixed point.
double conn_error(const AlphaMatte& p, const AlphaMatte& g, const Trimap& t, double step = 0.1);

/// Central differences of a scalar function against reverse-mode gradients.
struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
  /// Entries matched only by a one-sided difference (a kink within h).
  std::size_t one_sided = 0;
};

using ScalarFn = std::function<nn::Var(const std::vector<nn::Var>&)>;

/// Relative error per entry is |a - n| / max(|a|, |n|, floor). `stride`
/// checks every stride-th entry of each input.
GradCheck finite_difference_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                  double h = 1e-6, double floor = 1e-7, std::size_t stride = 1);

/// Same against the current values of existing leaves (e.g. parameters),
/// restoring them afterwards. At most `per_leaf` entries per leaf, spread
/// evenly. Where the central difference straddles a ReLU or |.| kink the
/// closer of the forward and backward differences is used instead.
GradCheck finite_difference_check_leaves(const std::function<nn::Var()>& f,
                                         std::vector<nn::Var> leaves, std::size_t per_leaf,
                                         double h = 1e-6, double floor = 1e-7);

/// 3x3 box average with mirrored borders, per channel.
Tensor box_blur3(const Tensor& x);

}  // namespace lfp::oracle
