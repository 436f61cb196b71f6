#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lfp/core.hpp"

namespace lfp::analysis {

/// Class of a pixel inside T^U; pixels outside T^U are Unlabeled.
enum class UnknownClass : std::uint8_t { Unlabeled = 0, FgLike = 1, BgLike = 2 };

/// FgLike iff alpha >= threshold, for unknown pixels only.
std::vector<UnknownClass> classify_unknown(const AlphaMatte& alpha_gt, const Trimap& t,
                                           double threshold = 0.5);

struct DistanceMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // +inf everywhere when the target set is empty
  bool target_empty = false;

  double operator()(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// Exact Euclidean distance from every pixel to the nearest pixel of the
/// site mask (two-pass lower-envelope transform).
DistanceMap euclidean_distance(const std::vector<std::uint8_t>& sites, int height, int width);

/// Exact Euclidean distance to the nearest pixel labelled `target`.
DistanceMap distance_to_known(const Trimap& t, Label target);

enum Curve { FgLikeToFg = 0, FgLikeToBg = 1, BgLikeToFg = 2, BgLikeToBg = 3 };
inline constexpr std::array<double, 4> kPercentileRanks{25.0, 50.0, 75.0, 90.0};
const char* curve_name(int curve);

struct DistanceStats {
  /// Pooled distances per curve, sorted ascending.
  std::array<std::vector<double>, 4> distances;
  std::array<std::array<double, 4>, 4> percentiles{};
  std::size_t samples_used = 0;
  std::size_t samples_skipped = 0;

  /// Fraction of pooled distances <= d.
  double cdf(int curve, double d) const;
};

/// Linear-interpolated percentile of sorted data (rank in [0, 100]).
double percentile(const std::vector<double>& sorted, double rank);

/// Pools distances over samples that contain both known FG and known BG.
/// Throws DataError when every sample is skipped.
DistanceStats dataset_distance_stats(const std::vector<std::pair<Trimap, AlphaMatte>>& samples,
                                     unsigned workers = 1, double threshold = 0.5);

/// Serialises percentiles, counts and unit-width histograms as JSON text.
std::string stats_to_json(const DistanceStats& s);

/// Cumulative curves in the style of the distance figure, with a vertical
/// marker at `marker_px`.
void write_distance_plot(const DistanceStats& s, const std::string& path,
                         double marker_px = 75.0);

}  // namespace lfp::analysis
