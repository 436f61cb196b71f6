#include "lfp/propagating.hpp"

#include <algorithm>

#include "lfp/errors.hpp"
#include "lfp/nn/resample.hpp"

namespace lfp::propagating {

using nn::Activation;
using nn::ConvUnit;
using nn::NormKind;
using nn::ResidualBlock;

namespace {

constexpr int kInputChannels = 6;

void require_positive(const std::array<int, 4>& v, const char* what) {
  for (int x : v) {
    if (x < 1) throw ConfigError(std::string("propagating.") + what + " must be positive");
  }
}

}  // namespace

void PropagatingConfig::validate() const {
  if (input_downsample_factor < 1) {
    throw ConfigError("propagating.input_downsample_factor must be >= 1");
  }
  if (stem_channels < 1) throw ConfigError("propagating.stem_channels must be positive");
  require_positive(stage_widths, "stage_widths");
  require_positive(stage_blocks, "stage_blocks");
  require_positive(strides, "strides");
  require_positive(dilations, "dilations");
  require_positive(decoder_widths, "decoder_widths");
  if (dilations[2] != 2 || dilations[3] != 4) {
    throw ConfigError("propagating.dilations must end with (2, 4)");
  }
  for (int k : {stem_kernel, block_kernel, decoder_kernel, head_kernel}) {
    if (k < 1 || k % 2 == 0) throw ConfigError("propagating kernels must be odd and positive");
  }
  if (tap_level < 1 || tap_level > 4) throw ConfigError("propagating.tap_level must be in 1..4");
  bottleneck.validate();
}

int PropagatingConfig::total_stride() const {
  int s = input_downsample_factor * 4;
  for (int v : strides) s *= v;
  return s;
}

nn::Tensor network_input(const Image& image, const Trimap& trimap) {
  require_same_size(image.height(), image.width(), trimap.height(), trimap.width(),
                    "image and trimap");
  const nn::Tensor code = encode_trimap(trimap);
  nn::Tensor out = nn::Tensor::chw(kInputChannels, image.height(), image.width());
  const std::size_t plane = out.plane();
  std::copy_n(image.tensor().data(), 3 * plane, out.data());
  std::copy_n(code.data(), 3 * plane, out.data() + 3 * plane);
  return out;
}

PropagatingModule::PropagatingModule(nn::ParamStore& store, const PropagatingConfig& cfg)
    : cfg_(cfg) {
  cfg.validate();
  const std::string enc = "propagating.encoder";
  stem_ = ConvUnit(store, enc + ".stem",
                   {kInputChannels, cfg.stem_channels, cfg.stem_kernel, 2, 1, cfg.norm,
                    Activation::Relu});
  int in = cfg.stem_channels;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg.stage_blocks[s]; ++b) {
      ResidualBlock::Options o;
      o.type = cfg.block;
      o.in = in;
      o.width = cfg.stage_widths[s];
      o.stride = b == 0 ? cfg.strides[s] : 1;
      o.dilation = cfg.dilations[s];
      o.kernel = cfg.block_kernel;
      o.norm = cfg.norm;
      stages_[s].emplace_back(store,
                              enc + ".layer" + std::to_string(s + 1) + ".block" + std::to_string(b),
                              o);
      in = stages_[s].back().out_channels();
    }
  }
  bottleneck_ = cspp::Bottleneck(store, "propagating.bottleneck", in, cfg.variant, cfg.bottleneck);

  const std::array<int, 4> skip_channels{stages_[0].back().out_channels(), cfg.stem_channels,
                                         kInputChannels, kInputChannels};
  in = bottleneck_.out_channels();
  for (int i = 0; i < 4; ++i) {
    decoder_[i] = ConvUnit(store, "propagating.decoder.stage" + std::to_string(i + 1),
                           {in, cfg.decoder_widths[i], cfg.decoder_kernel, 1, 1, cfg.norm,
                            Activation::Relu});
    in = cfg.decoder_widths[i] + skip_channels[i];
  }
  head_ = ConvUnit(store, "propagating.head",
                   {in, 1, cfg.head_kernel, 1, 1, NormKind::None, Activation::None});
}

void PropagatingModule::check_input(const Var& input) const {
  const nn::Tensor& v = input.value();
  if (v.rank() != 3 || v.channels() != kInputChannels) {
    throw DimensionError("propagating input must be [6, H, W], got " + v.shape_string());
  }
  if (v.height() != v.width()) throw GeometryError("context patch must be square");
  const int side = v.height();
  const int f = cfg_.input_downsample_factor;
  if (side % (2 * f) != 0 || side % cfg_.total_stride() != 0) {
    throw GeometryError("context side " + std::to_string(side) + " must be divisible by " +
                        std::to_string(std::max(2 * f, cfg_.total_stride())));
  }
}

Var PropagatingModule::context_downsample(const Var& input) const {
  const int f = cfg_.input_downsample_factor;
  if (f == 1) return input;
  return nn::resize_bicubic(input, input.value().height() / f, input.value().width() / f);
}

FeatureGeometry PropagatingModule::tap_geometry() const {
  const int f = cfg_.input_downsample_factor;
  const std::array<int, 4> skip_scale{f * 4 * cfg_.strides[0], f * 2, f, 1};
  return {skip_scale[cfg_.tap_level - 1], 0};
}

PropagationTrace PropagatingModule::trace(const Var& input) const {
  check_input(input);
  PropagationTrace t;
  t.input = input;
  t.downsampled = context_downsample(input);
  t.stem = stem_.forward(t.downsampled);
  t.pooled = nn::max_pool(t.stem, 3, 2, 1);
  Var x = t.pooled;
  for (int s = 0; s < 4; ++s) {
    for (const auto& b : stages_[s]) x = b.forward(x);
    t.stages[s] = x;
  }
  t.bottleneck = bottleneck_.forward(x);

  const std::array<Var, 4> skips{t.stages[0], t.stem, t.downsampled, t.input};
  x = t.bottleneck;
  for (int i = 0; i < 4; ++i) {
    const nn::Tensor& sv = skips[i].value();
    Var y = nn::resize_bilinear(decoder_[i].forward(x), sv.height(), sv.width());
    if (i + 1 == cfg_.tap_level) t.output.context_features = y;
    t.decoder[i] = y;
    x = nn::concat_channels({y, skips[i]});
  }
  t.output.context_alpha = nn::sigmoid(head_.forward(x));
  t.output.tap_geometry = tap_geometry();
  return t;
}

PropagationOutput PropagatingModule::forward(const Var& input) const {
  return trace(input).output;
}

PropagationOutput PropagatingModule::forward(const ContextPair& pair) const {
  return forward(Var::constant(network_input(pair.image, pair.trimap)));
}

namespace {

// Influence of the prefix [0, hi] of an axis, expressed as the largest
// affected output index (-1 when nothing is affected).
int through_axis(const nn::AxisMap& m, int hi) {
  int out = -1;
  for (int o = 0; o < m.out_size; ++o) {
    for (int k = m.offset[o]; k < m.offset[o + 1]; ++k) {
      if (m.index[k] <= hi && m.weight[k] != 0.0) {
        out = o;
        break;
      }
    }
  }
  return out;
}

struct AxisState {
  int size;
  int hi;
};

AxisState through_conv(AxisState a, int kernel, int stride, int dilation) {
  const nn::ConvGeometry g{stride, dilation * (kernel - 1) / 2, dilation};
  const int out = nn::conv_output_size(a.size, kernel, g);
  int hi = -1;
  for (int o = 0; o < out; ++o) {
    for (int j = 0; j < kernel; ++j) {
      const int i = o * stride - g.pad + j * dilation;
      if (i >= 0 && i <= a.hi && i < a.size) hi = o;
    }
  }
  return {out, hi};
}

AxisState through_block(AxisState a, const PropagatingConfig& cfg, int stride, int dilation,
                        bool projection) {
  AxisState m = a;
  if (cfg.block == nn::BlockType::Basic) {
    m = through_conv(m, cfg.block_kernel, stride, dilation);
    m = through_conv(m, cfg.block_kernel, 1, dilation);
  } else {
    m = through_conv(m, 1, 1, 1);
    m = through_conv(m, cfg.block_kernel, stride, dilation);
    m = through_conv(m, 1, 1, 1);
  }
  const AxisState s = projection ? through_conv(a, 1, stride, 1) : a;
  return {m.size, std::max(m.hi, s.hi)};
}

}  // namespace

int context_influence_extent(const PropagatingConfig& cfg, int context_side) {
  if (cfg.norm == NormKind::Group || cfg.variant != cspp::Variant::None) return context_side;
  const int f = cfg.input_downsample_factor;
  const AxisState input{context_side, 0};
  AxisState down = input;
  if (f > 1) {
    down = {context_side / f, through_axis(nn::bicubic_axis(context_side, context_side / f), 0)};
  }
  const AxisState stem = through_conv(down, cfg.stem_kernel, 2, 1);
  AxisState x = through_conv(stem, 3, 2, 1);
  int channels = cfg.stem_channels;
  AxisState layer1{};
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg.stage_blocks[s]; ++b) {
      const int stride = b == 0 ? cfg.strides[s] : 1;
      const int out_channels = cfg.stage_widths[s] * nn::expansion(cfg.block);
      x = through_block(x, cfg, stride, cfg.dilations[s], channels != out_channels || stride != 1);
      channels = out_channels;
    }
    if (s == 0) layer1 = x;
  }
  const std::array<AxisState, 4> skips{layer1, stem, down, input};
  for (int i = 0; i < 4; ++i) {
    x = through_conv(x, cfg.decoder_kernel, 1, 1);
    x = {skips[i].size, through_axis(nn::bilinear_axis(x.size, skips[i].size), x.hi)};
    if (i + 1 == cfg.tap_level) {
      if (x.hi < 0) return 0;
      const int scale = context_side / x.size;
      return std::min(context_side, (x.hi + 1) * scale);
    }
    x.hi = std::max(x.hi, skips[i].hi);
  }
  return context_side;
}

}  // namespace lfp::propagating
