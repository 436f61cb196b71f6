#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lfp/core.hpp"
#include "lfp/geometry.hpp"

namespace lfp::datagen {

using Rng = std::mt19937_64;

struct AugmentConfig {
  std::vector<int> crop_sizes{768, 640, 512, 448, 320};
  int kernel_min = 3;
  int kernel_max = 35;
  double fg_to_unknown_prob = 0.25;
  double rotation_max_deg = 30.0;
  double scale_min = 0.8;
  double scale_max = 1.25;
  double shear_max_deg = 10.0;
  double flip_prob = 0.5;
  double saturation_min = 0.5;
  double saturation_max = 1.5;
  double grayscale_prob = 0.1;
  double gamma_min = 0.7;
  double gamma_max = 1.4;
  double contrast_min = 0.8;
  double contrast_max = 1.2;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct FgAsset {
  ColorMap fg;
  AlphaMatte alpha;
};

struct BgAsset {
  Image image;
};

/// Odd-sized square binary erosion with mirrored borders; mask is 0/1.
std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& mask, int height, int width,
                                int kernel);

/// FG = erode(alpha >= 1 - 1/255, erode_k); BG = erode(alpha <= 1/255, dilate_k);
/// everything else unknown.
Trimap synth_trimap(const AlphaMatte& alpha, int erode_k, int dilate_k);

/// With probability p relabels every FG pixel as unknown.
Trimap fg_regions_to_unknown(const Trimap& t, double p, Rng& rng);

/// One draw of the augmentation parameters.
struct AugmentParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double shear_deg = 0.0;
  bool flip = false;
  double saturation = 1.0;
  bool grayscale = false;
  double gamma = 1.0;
  double contrast = 1.0;

  /// 2x2 linear part of the forward map (about the image centre).
  std::array<double, 4> linear() const;
};

AugmentParams draw_params(Rng& rng, const AugmentConfig& cfg);

/// Forward affine warp about the centre with bilinear sampling. Alpha reads
/// as zero outside the source, colour as the nearest border value.
FgAsset apply_affine(const FgAsset& a, const AugmentParams& p);
/// Blend towards luma: gray + s * (c - gray).
ColorMap apply_saturation(const ColorMap& c, double s);
ColorMap apply_grayscale(const ColorMap& c);
ColorMap apply_gamma(const ColorMap& c, double g);
/// (c - 0.5) * k + 0.5.
ColorMap apply_contrast(const ColorMap& c, double k);

/// Affine, saturation, optional grayscale, gamma, contrast, then clipping.
/// Alpha only receives the geometric part.
FgAsset augment(const FgAsset& a, const AugmentParams& p);
FgAsset augment(const FgAsset& a, Rng& rng, const AugmentConfig& cfg);

struct SampleMeta {
  int crop_size = 0;
  int inner_x = 0;
  int inner_y = 0;
  int scene_height = 0;
  int scene_width = 0;
  int erode_k = 0;
  int dilate_k = 0;
  bool fg_to_unknown = false;
  AugmentParams augment;
  PatchGeometry geometry;
};

struct TrainingSample {
  Sample inner;
  ContextPair context;
  AlphaMatte context_alpha_gt;
  SampleMeta meta;
};

/// Composites an augmented foreground over a background crop, synthesises
/// the trimap and cuts the inner patch and its reflect-padded 2x context.
TrainingSample make_training_sample(const FgAsset& fg, const BgAsset& bg, Rng& rng,
                                    const AugmentConfig& cfg);

/// Smooth random foreground: soft-edged ellipses over a textured colour layer.
FgAsset procedural_fg(Rng& rng, int height, int width);
/// Smooth random background: gradients plus low-frequency sinusoids.
BgAsset procedural_bg(Rng& rng, int height, int width);

struct AssetSet {
  std::vector<FgAsset> fg;
  std::vector<BgAsset> bg;
  std::vector<std::string> fg_names;
};

AssetSet procedural_assets(std::uint64_t seed, int count_fg, int count_bg, int side);

/// Loads fg/, alpha/, bg/ (pairs from manifest.txt when present, otherwise
/// by matching file stems).
AssetSet load_asset_folder(const std::string& dir);

/// Per-sample generator seed derived from the run seed and sample index.
Rng sample_rng(std::uint64_t seed, std::uint64_t index);

/// Deterministic sample i: foreground i mod |fg|, background drawn from the
/// sample's own stream.
TrainingSample generate_sample(const AssetSet& assets, const AugmentConfig& cfg,
                               std::uint64_t seed, std::uint64_t index);

/// Samples 0, 1, 2, ... produced by worker threads into a bounded buffer and
/// delivered in index order, so the sequence does not depend on scheduling.
class SampleStream {
 public:
  SampleStream(const AssetSet& assets, AugmentConfig cfg, std::uint64_t seed, unsigned workers,
               std::size_t capacity, std::uint64_t count);
  ~SampleStream();
  SampleStream(const SampleStream&) = delete;
  SampleStream& operator=(const SampleStream&) = delete;

  /// Blocks until the next sample is ready; false once `count` were taken.
  bool next(TrainingSample& out);

 private:
  void work(unsigned id);

  const AssetSet& assets_;
  AugmentConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t count_;
  std::size_t capacity_;
  unsigned workers_;
  std::uint64_t consumed_ = 0;
  bool stop_ = false;
  std::map<std::uint64_t, TrainingSample> ready_;
  std::string error_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::thread> threads_;
};

}  // namespace lfp::datagen
