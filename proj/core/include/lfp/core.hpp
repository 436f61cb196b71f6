#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfp/errors.hpp"
#include "lfp/nn/tensor.hpp"

namespace lfp {

/// Trimap label. File codes: 0 = BG, 128 = U, 255 = FG.
enum class Label : std::uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

/// Per-pixel maps with values in [0, 1], stored planar as [C, H, W].
/// The tag keeps images, colour layers and mattes from being mixed up.
template <int Channels, class Tag>
class PixelMap {
 public:
  static constexpr int kChannels = Channels;

  PixelMap() = default;
  PixelMap(int height, int width, double fill = 0.0)
      : data_(nn::Tensor::chw(Channels, height, width, fill)) {
    if (height < 1 || width < 1) throw DimensionError("pixel map must be at least 1x1");
  }

  /// Adopts a [C, H, W] tensor; throws if the shape or value range is wrong.
  static PixelMap from_tensor(nn::Tensor t) {
    if (t.rank() != 3 || t.channels() != Channels || t.height() < 1 || t.width() < 1) {
      throw DimensionError("expected [" + std::to_string(Channels) + ", H, W], got " +
                           t.shape_string());
    }
    for (double v : t.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("pixel value outside [0, 1]");
    }
    PixelMap m;
    m.data_ = std::move(t);
    return m;
  }

  /// Same as from_tensor() but clips into [0, 1] instead of rejecting.
  static PixelMap clipped(nn::Tensor t) {
    for (double& v : t.values()) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return from_tensor(std::move(t));
  }

  template <class OtherTag>
  static PixelMap retag(const PixelMap<Channels, OtherTag>& other) {
    PixelMap m;
    m.data_ = other.tensor();
    return m;
  }

  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  double at(int c, int y, int x) const { return data_.at(c, y, x); }
  double& at(int c, int y, int x) { return data_.at(c, y, x); }
  double operator()(int y, int x) const { return data_.at(0, y, x); }
  double& operator()(int y, int x) { return data_.at(0, y, x); }

  const nn::Tensor& tensor() const { return data_; }
  nn::Tensor& tensor() { return data_; }

  bool operator==(const PixelMap&) const = default;

 private:
  nn::Tensor data_;
};

struct ImageTag {};
struct ColorTag {};
struct AlphaTag {};

using Image = PixelMap<3, ImageTag>;
using ColorMap = PixelMap<3, ColorTag>;
using AlphaMatte = PixelMap<1, AlphaTag>;

class Trimap {
 public:
  Trimap() = default;
  Trimap(int height, int width, Label fill = Label::Unknown);

  int height() const { return height_; }
  int width() const { return width_; }
  Label operator()(int y, int x) const {
    return labels_[static_cast<std::size_t>(y) * width_ + x];
  }
  Label& operator()(int y, int x) { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<Label>& labels() const { return labels_; }

  std::size_t count(Label l) const;

  /// Maps file codes {0, 128, 255}; any other code is a DataError.
  static Label from_code(int code);
  static int to_code(Label l);

  bool operator==(const Trimap&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Label> labels_;
};

/// Boolean region masks stored as 0/1 bytes, row-major.
struct RegionMasks {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> unknown;        // T^U
  std::vector<std::uint8_t> fg_or_unknown;  // T^FU
  std::vector<std::uint8_t> bg_or_unknown;  // T^BU
};

/// One training/evaluation unit with its ground-truth layers.
struct Sample {
  Image image;
  Trimap trimap;
  AlphaMatte alpha_gt;
  ColorMap fg_gt;
  ColorMap bg_gt;
};

/// I = alpha * F + (1 - alpha) * B, per channel.
Image composite(const ColorMap& fg, const ColorMap& bg, const AlphaMatte& alpha);

/// One-hot [3, H, W]: channel 0 = FG, 1 = BG, 2 = U.
nn::Tensor encode_trimap(const Trimap& t);

RegionMasks region_masks(const Trimap& t);

/// 1 on FG, 0 on BG, unchanged on U.
AlphaMatte clamp_by_trimap(const AlphaMatte& alpha, const Trimap& t);

/// 0/1 mask tensor [1, H, W] of the given region.
nn::Tensor mask_tensor(const std::vector<std::uint8_t>& mask, int height, int width);

void require_same_size(int h0, int w0, int h1, int w1, const char* what);

}  // namespace lfp
