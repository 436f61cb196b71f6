#pragma once

#include "lfp/core.hpp"

namespace lfp {

enum class PadMode { Reflect, Replicate };

struct Padding {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;

  bool operator==(const Padding&) const = default;
};

/// Binds an inner s x s window to its centred 2s x 2s context window, in
/// image pixel coordinates. Either window may extend past the image; the
/// padding fields record by how much on each edge.
struct PatchGeometry {
  int inner_x = 0;
  int inner_y = 0;
  int inner_side = 0;
  int context_x = 0;
  int context_y = 0;
  int context_side = 0;
  Padding inner_pad;
  Padding context_pad;

  /// Offset of the inner window inside the context window.
  int inner_offset() const { return (context_side - inner_side) / 2; }

  bool operator==(const PatchGeometry&) const = default;
};

/// Builds the geometry for an inner window at (x, y) of side s inside an
/// image of the given size. s must be even.
PatchGeometry make_patch_geometry(int x, int y, int side, int image_height, int image_width);

/// Context image and trimap patches plus the geometry that produced them.
struct ContextPair {
  Image image;
  Trimap trimap;
  PatchGeometry geometry;
};

/// Window [y0, y0 + h) x [x0, x0 + w) with out-of-image pixels filled by
/// the pad mode.
template <class Map>
Map crop_padded(const Map& src, int y0, int x0, int h, int w, PadMode mode);
Trimap crop_padded(const Trimap& src, int y0, int x0, int h, int w, PadMode mode);

/// Same without padding; the window must lie inside the source.
template <class Map>
Map crop_window(const Map& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.height() || x0 + w > src.width()) {
    throw GeometryError("crop window exceeds source bounds");
  }
  return crop_padded(src, y0, x0, h, w, PadMode::Replicate);
}
Trimap crop_window(const Trimap& src, int y0, int x0, int h, int w);

/// Writes `patch` into `dst` at (y0, x0), clipping at the borders.
template <class Map>
void paste(Map& dst, const Map& patch, int y0, int x0);

int pad_index(int i, int n, PadMode mode);

extern template Image crop_padded(const Image&, int, int, int, int, PadMode);
extern template ColorMap crop_padded(const ColorMap&, int, int, int, int, PadMode);
extern template AlphaMatte crop_padded(const AlphaMatte&, int, int, int, int, PadMode);
extern template void paste(Image&, const Image&, int, int);
extern template void paste(ColorMap&, const ColorMap&, int, int);
extern template void paste(AlphaMatte&, const AlphaMatte&, int, int);

}  // namespace lfp
