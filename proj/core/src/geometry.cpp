#include "lfp/geometry.hpp"

#include <algorithm>

#include "lfp/nn/resample.hpp"

namespace lfp {

int pad_index(int i, int n, PadMode mode) {
  return mode == PadMode::Reflect ? nn::reflect_index(i, n) : nn::replicate_index(i, n);
}

PatchGeometry make_patch_geometry(int x, int y, int side, int image_height, int image_width) {
  if (side < 2 || side % 2 != 0) {
    throw GeometryError("inner side must be even and >= 2, got " + std::to_string(side));
  }
  PatchGeometry g;
  g.inner_x = x;
  g.inner_y = y;
  g.inner_side = side;
  g.context_side = 2 * side;
  g.context_x = x - side / 2;
  g.context_y = y - side / 2;
  auto pads = [&](int ox, int oy, int s) {
    Padding p;
    p.left = std::max(0, -ox);
    p.top = std::max(0, -oy);
    p.right = std::max(0, ox + s - image_width);
    p.bottom = std::max(0, oy + s - image_height);
    return p;
  };
  g.inner_pad = pads(g.inner_x, g.inner_y, side);
  g.context_pad = pads(g.context_x, g.context_y, g.context_side);
  return g;
}

template <class Map>
Map crop_padded(const Map& src, int y0, int x0, int h, int w, PadMode mode) {
  Map out(h, w);
  const int H = src.height(), W = src.width();
  std::vector<int> xs(static_cast<std::size_t>(w));
  for (int x = 0; x < w; ++x) xs[static_cast<std::size_t>(x)] = pad_index(x0 + x, W, mode);
  for (int c = 0; c < Map::kChannels; ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = pad_index(y0 + y, H, mode);
      for (int x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, sy, xs[static_cast<std::size_t>(x)]);
    }
  }
  return out;
}

Trimap crop_padded(const Trimap& src, int y0, int x0, int h, int w, PadMode mode) {
  Trimap out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = pad_index(y0 + y, src.height(), mode);
    for (int x = 0; x < w; ++x) out(y, x) = src(sy, pad_index(x0 + x, src.width(), mode));
  }
  return out;
}

Trimap crop_window(const Trimap& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.height() || x0 + w > src.width()) {
    throw GeometryError("crop window exceeds trimap bounds");
  }
  return crop_padded(src, y0, x0, h, w, PadMode::Replicate);
}

template <class Map>
void paste(Map& dst, const Map& patch, int y0, int x0) {
  for (int c = 0; c < Map::kChannels; ++c) {
    for (int y = 0; y < patch.height(); ++y) {
      const int dy = y0 + y;
      if (dy < 0 || dy >= dst.height()) continue;
      for (int x = 0; x < patch.width(); ++x) {
        const int dx = x0 + x;
        if (dx < 0 || dx >= dst.width()) continue;
        dst.at(c, dy, dx) = patch.at(c, y, x);
      }
    }
  }
}

template Image crop_padded(const Image&, int, int, int, int, PadMode);
template ColorMap crop_padded(const ColorMap&, int, int, int, int, PadMode);
template AlphaMatte crop_padded(const AlphaMatte&, int, int, int, int, PadMode);
template void paste(Image&, const Image&, int, int);
template void paste(ColorMap&, const ColorMap&, int, int);
template void paste(AlphaMatte&, const AlphaMatte&, int, int);

}  // namespace lfp
