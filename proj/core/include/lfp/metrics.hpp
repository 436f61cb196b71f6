#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lfp/core.hpp"

namespace lfp::metrics {

/// Errors over the unknown region. Scaled values follow the benchmark
/// tables; the *_raw fields keep the unscaled sums and means.
struct MetricReport {
  double sad = 0.0;   // sum |d| / 1000
  double mse = 0.0;   // mean d^2 * 1000
  double grad = 0.0;  // sum (|grad p| - |grad g|)^2 / 1000
  double conn = 0.0;  // sum |phi_p - phi_g| / 1000
  double sad_raw = 0.0;
  double mse_raw = 0.0;
  double grad_raw = 0.0;
  double conn_raw = 0.0;
  std::size_t unknown_pixels = 0;
  bool empty_region = false;
};

double sad(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t);
double mse(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t);
/// grad and conn read neighbourhoods; known pixels of `pred` are replaced by
/// `gt` first so only unknown-region predictions matter.
double grad_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t,
                  double sigma = 1.4);
double conn_error(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t,
                  double step = 0.1);

MetricReport evaluate(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& t);

/// Normalised first-derivative-of-Gaussian kernel (x derivative), side
/// 2 * halfsize + 1 with halfsize = ceil(sigma * sqrt(-2 ln(sqrt(2 pi) sigma 0.01))).
std::vector<double> gaussian_derivative_kernel(double sigma, int* halfsize);

/// Gradient magnitude with replicated borders.
std::vector<double> gradient_magnitude(const AlphaMatte& a, double sigma);

/// Per-threshold connectivity level map l of the benchmark definition.
std::vector<double> connectivity_levels(const AlphaMatte& pred, const AlphaMatte& gt, double step);

/// Largest 4-connected component of a binary mask (ties: first found in
/// raster order).
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& mask, int height,
                                            int width);

}  // namespace lfp::metrics
