#include "lfp/nn/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "lfp/errors.hpp"

namespace lfp::nn {

namespace {

void check_sizes(int in_size, int out_size) {
  if (in_size < 1 || out_size < 1) {
    throw ParameterError("resample axis sizes must be positive (in=" + std::to_string(in_size) +
                         ", out=" + std::to_string(out_size) + ")");
  }
}

double cubic_weight(double x) {
  constexpr double a = -0.75;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Merges duplicate taps so each output row lists every input index once.
void push_merged(AxisMap& m, const std::map<int, double>& taps, bool normalise) {
  double total = 0.0;
  for (const auto& [i, w] : taps) total += w;
  for (const auto& [i, w] : taps) {
    if (w == 0.0) continue;
    m.push(i, normalise ? w / total : w);
  }
  m.close_row();
}

constexpr std::array<double, 5> kBinomial{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

}  // namespace

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

int replicate_index(int i, int n) { return std::clamp(i, 0, n - 1); }

AxisMap bilinear_axis(int in_size, int out_size) {
  return bilinear_window_axis(in_size, 0.0, static_cast<double>(in_size), out_size);
}

AxisMap bilinear_window_axis(int in_size, double start, double length, int out_size) {
  check_sizes(in_size, out_size);
  AxisMap m;
  m.in_size = in_size;
  m.out_size = out_size;
  const double scale = length / out_size;
  const double lo = start;
  const double hi = start + length - 1.0;
  for (int o = 0; o < out_size; ++o) {
    double src = start + (o + 0.5) * scale - 0.5;
    src = std::clamp(src, lo, std::max(lo, hi));
    const int i0 = static_cast<int>(std::floor(src));
    const double t = src - i0;
    std::map<int, double> taps;
    taps[replicate_index(i0, in_size)] += 1.0 - t;
    if (t > 0.0) taps[replicate_index(i0 + 1, in_size)] += t;
    push_merged(m, taps, false);
  }
  return m;
}

AxisMap bicubic_axis(int in_size, int out_size) {
  check_sizes(in_size, out_size);
  AxisMap m;
  m.in_size = in_size;
  m.out_size = out_size;
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const int i0 = static_cast<int>(std::floor(src));
    const double t = src - i0;
    std::map<int, double> taps;
    for (int k = -1; k <= 2; ++k) {
      taps[replicate_index(i0 + k, in_size)] += cubic_weight(t - k);
    }
    push_merged(m, taps, false);
  }
  return m;
}

AxisMap nearest_axis(int in_size, int out_size) {
  check_sizes(in_size, out_size);
  AxisMap m;
  m.in_size = in_size;
  m.out_size = out_size;
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const int i = std::min(in_size - 1, static_cast<int>(std::floor((o + 0.5) * scale)));
    m.push(i, 1.0);
    m.close_row();
  }
  return m;
}

std::vector<int> block_boundaries(int size, int grid) {
  std::vector<int> b(static_cast<std::size_t>(grid) + 1);
  for (int k = 0; k <= grid; ++k) {
    b[static_cast<std::size_t>(k)] =
        static_cast<int>(std::lround(static_cast<double>(k) * size / grid));
  }
  return b;
}

AxisMap block_average_axis(int in_size, int grid) {
  if (grid < 1 || grid > in_size) {
    throw ParameterError("block grid " + std::to_string(grid) + " outside [1, " +
                         std::to_string(in_size) + "]");
  }
  AxisMap m;
  m.in_size = in_size;
  m.out_size = grid;
  const auto b = block_boundaries(in_size, grid);
  for (int k = 0; k < grid; ++k) {
    const int lo = b[static_cast<std::size_t>(k)];
    const int hi = b[static_cast<std::size_t>(k) + 1];
    const double w = 1.0 / (hi - lo);
    for (int i = lo; i < hi; ++i) m.push(i, w);
    m.close_row();
  }
  return m;
}

AxisMap pyramid_down_axis(int in_size) {
  check_sizes(in_size, 1);
  AxisMap m;
  m.in_size = in_size;
  m.out_size = (in_size + 1) / 2;
  for (int o = 0; o < m.out_size; ++o) {
    std::map<int, double> taps;
    for (int t = 0; t < 5; ++t) {
      taps[reflect_index(2 * o + t - 2, in_size)] += kBinomial[static_cast<std::size_t>(t)];
    }
    push_merged(m, taps, true);
  }
  return m;
}

AxisMap pyramid_up_axis(int in_size, int out_size) {
  check_sizes(in_size, out_size);
  if ((out_size + 1) / 2 != in_size) {
    throw ParameterError("pyramid up: " + std::to_string(in_size) + " cannot expand to " +
                         std::to_string(out_size));
  }
  AxisMap m;
  m.in_size = in_size;
  m.out_size = out_size;
  for (int o = 0; o < out_size; ++o) {
    std::map<int, double> taps;
    for (int t = 0; t < 5; ++t) {
      const int z = reflect_index(o + t - 2, out_size);
      if (z % 2 == 0) taps[z / 2] += 2.0 * kBinomial[static_cast<std::size_t>(t)];
    }
    push_merged(m, taps, true);
  }
  return m;
}

}  // namespace lfp::nn
