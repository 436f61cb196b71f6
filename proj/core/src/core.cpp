#include "lfp/core.hpp"

#include <algorithm>

namespace lfp {

void require_same_size(int h0, int w0, int h1, int w1, const char* what) {
  if (h0 != h1 || w0 != w1) {
    throw DimensionError(std::string(what) + ": size mismatch " + std::to_string(h0) + "x" +
                         std::to_string(w0) + " vs " + std::to_string(h1) + "x" +
                         std::to_string(w1));
  }
}

Trimap::Trimap(int height, int width, Label fill)
    : height_(height), width_(width), labels_(static_cast<std::size_t>(height) * width, fill) {
  if (height < 1 || width < 1) throw DimensionError("trimap must be at least 1x1");
}

std::size_t Trimap::count(Label l) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), l));
}

Label Trimap::from_code(int code) {
  switch (code) {
    case 0:
      return Label::Background;
    case 128:
      return Label::Unknown;
    case 255:
      return Label::Foreground;
    default:
      throw DataError("invalid trimap code " + std::to_string(code) +
                      " (expected 0, 128 or 255)");
  }
}

int Trimap::to_code(Label l) {
  switch (l) {
    case Label::Background:
      return 0;
    case Label::Unknown:
      return 128;
    case Label::Foreground:
      return 255;
  }
  return 128;
}

Image composite(const ColorMap& fg, const ColorMap& bg, const AlphaMatte& alpha) {
  require_same_size(fg.height(), fg.width(), bg.height(), bg.width(), "composite");
  require_same_size(fg.height(), fg.width(), alpha.height(), alpha.width(), "composite");
  Image out(fg.height(), fg.width());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < fg.height(); ++y) {
      for (int x = 0; x < fg.width(); ++x) {
        const double a = alpha(y, x);
        const double v = a * fg.at(c, y, x) + (1.0 - a) * bg.at(c, y, x);
        out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

nn::Tensor encode_trimap(const Trimap& t) {
  nn::Tensor out = nn::Tensor::chw(3, t.height(), t.width());
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      switch (t(y, x)) {
        case Label::Foreground:
          out.at(0, y, x) = 1.0;
          break;
        case Label::Background:
          out.at(1, y, x) = 1.0;
          break;
        case Label::Unknown:
          out.at(2, y, x) = 1.0;
          break;
      }
    }
  }
  return out;
}

RegionMasks region_masks(const Trimap& t) {
  RegionMasks m;
  m.height = t.height();
  m.width = t.width();
  const std::size_t n = t.labels().size();
  m.unknown.resize(n);
  m.fg_or_unknown.resize(n);
  m.bg_or_unknown.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Label l = t.labels()[i];
    m.unknown[i] = l == Label::Unknown;
    m.fg_or_unknown[i] = l != Label::Background;
    m.bg_or_unknown[i] = l != Label::Foreground;
  }
  return m;
}

AlphaMatte clamp_by_trimap(const AlphaMatte& alpha, const Trimap& t) {
  require_same_size(alpha.height(), alpha.width(), t.height(), t.width(), "clamp_by_trimap");
  AlphaMatte out = alpha;
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      if (t(y, x) == Label::Foreground) out(y, x) = 1.0;
      if (t(y, x) == Label::Background) out(y, x) = 0.0;
    }
  }
  return out;
}

nn::Tensor mask_tensor(const std::vector<std::uint8_t>& mask, int height, int width) {
  nn::Tensor out = nn::Tensor::chw(1, height, width);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace lfp
