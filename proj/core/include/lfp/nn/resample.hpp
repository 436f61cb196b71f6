#pragma once

#include <vector>

namespace lfp::nn {

/// Sparse linear map along one spatial axis: output index o receives
/// sum_k weight[k] * input[index[k]] for k in [offset[o], offset[o+1]).
/// Bilinear/bicubic interpolation, block averaging and the pyramid filters
/// are all separable, so a pair of AxisMaps describes each of them.
struct AxisMap {
  int in_size = 0;
  int out_size = 0;
  std::vector<int> offset{0};
  std::vector<int> index;
  std::vector<double> weight;

  void push(int i, double w) {
    index.push_back(i);
    weight.push_back(w);
  }
  void close_row() { offset.push_back(static_cast<int>(index.size())); }
};

/// Half-pixel-centred bilinear interpolation with edge clamping.
AxisMap bilinear_axis(int in_size, int out_size);

/// Bilinear resampling of the window [start, start + length) onto out_size
/// samples, clamped to the window.
AxisMap bilinear_window_axis(int in_size, double start, double length, int out_size);

/// Keys cubic convolution (a = -0.75), half-pixel centres, clamped taps.
AxisMap bicubic_axis(int in_size, int out_size);

/// Nearest-neighbour with half-pixel centres.
AxisMap nearest_axis(int in_size, int out_size);

/// Block boundaries round(k * size / grid), k = 0..grid.
std::vector<int> block_boundaries(int size, int grid);

/// Mean over each of the grid blocks delimited by block_boundaries().
AxisMap block_average_axis(int in_size, int grid);

/// 5-tap binomial blur with mirror borders, then stride 2. Output size
/// ceil(in / 2). Rows are normalised to unit sum.
AxisMap pyramid_down_axis(int in_size);

/// Zero insertion followed by the 5-tap binomial blur (gain 2) onto out_size
/// samples, mirror borders, rows normalised to unit sum.
AxisMap pyramid_up_axis(int in_size, int out_size);

/// Mirror index without edge repetition (…2 1 | 0 1 2 … n-1 | n-2 …),
/// valid for arbitrary overshoot.
int reflect_index(int i, int n);

/// Clamp-to-edge index.
int replicate_index(int i, int n);

}  // namespace lfp::nn
