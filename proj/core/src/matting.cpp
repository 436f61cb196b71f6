#include "lfp/matting.hpp"

#include "lfp/cspp.hpp"
#include "lfp/errors.hpp"
#include "lfp/nn/resample.hpp"

namespace lfp::matting {

using nn::Activation;
using nn::ConvUnit;
using nn::NormKind;
using nn::ResidualBlock;

namespace {
constexpr int kInputChannels = 6;
constexpr int kOutputChannels = 7;
}  // namespace

std::string to_string(FusionPoint p) {
  switch (p) {
    case FusionPoint::None:
      return "none";
    case FusionPoint::Input:
      return "input";
    case FusionPoint::PrePpm:
      return "pre_ppm";
    case FusionPoint::PostPpm:
      return "post_ppm";
  }
  return "pre_ppm";
}

FusionPoint parse_fusion_point(const std::string& s) {
  if (s == "none") return FusionPoint::None;
  if (s == "input") return FusionPoint::Input;
  if (s == "pre_ppm") return FusionPoint::PrePpm;
  if (s == "post_ppm") return FusionPoint::PostPpm;
  throw ConfigError("unknown matting.fusion '" + s + "'");
}

void MattingConfig::validate() const {
  for (int w : stem_widths) {
    if (w < 1) throw ConfigError("matting.stem_widths must be positive");
  }
  for (int i = 0; i < 4; ++i) {
    if (stage_widths[i] < 1 || stage_blocks[i] < 1 || strides[i] < 1 || dilations[i] < 1 ||
        decoder_widths[i] < 1) {
      throw ConfigError("matting stage and decoder settings must be positive");
    }
  }
  if (fusion != FusionPoint::None && fusion_channels < 1) {
    throw ConfigError("matting.fusion_channels must be positive");
  }
  if (ppm_grids.empty()) throw ConfigError("matting.ppm_grids must not be empty");
  for (std::size_t i = 0; i < ppm_grids.size(); ++i) {
    if (ppm_grids[i] < 1 || (i > 0 && ppm_grids[i] <= ppm_grids[i - 1])) {
      throw ConfigError("matting.ppm_grids must be strictly increasing positive integers");
    }
  }
  if (ppm_channels < 1 || head_width < 1) throw ConfigError("matting widths must be positive");
}

int MattingConfig::total_stride() const {
  int s = 4;
  for (int v : strides) s *= v;
  return s;
}

nn::AxisMap context_window_axis(const propagating::FeatureGeometry& tap, int tap_size,
                                int inner_offset, int inner_side, int out_size) {
  const double start = static_cast<double>(inner_offset - tap.offset) / tap.scale;
  const double length = static_cast<double>(inner_side) / tap.scale;
  if (start < 0.0 || start + length > tap_size + 1e-9) {
    throw GeometryError("tapped context features do not cover the inner window");
  }
  return nn::bilinear_window_axis(tap_size, start, length, out_size);
}

MattingModule::MattingModule(nn::ParamStore& store, const MattingConfig& cfg,
                             int context_channels)
    : cfg_(cfg) {
  cfg.validate();
  const bool fused = cfg.fusion != FusionPoint::None;
  const int fc = fused ? cfg.fusion_channels : 0;
  const std::string enc = "matting.encoder";

  int in = kInputChannels + (cfg.fusion == FusionPoint::Input ? fc : 0);
  for (int i = 0; i < 3; ++i) {
    stem_[i] = ConvUnit(store, enc + ".stem.conv" + std::to_string(i + 1),
                        {in, cfg.stem_widths[i], 3, i == 0 ? 2 : 1, 1, cfg.norm,
                         Activation::Relu});
    in = cfg.stem_widths[i];
  }
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg.stage_blocks[s]; ++b) {
      ResidualBlock::Options o;
      o.type = cfg.block;
      o.in = in;
      o.width = cfg.stage_widths[s];
      o.stride = b == 0 ? cfg.strides[s] : 1;
      o.dilation = cfg.dilations[s];
      o.norm = cfg.norm;
      stages_[s].emplace_back(store,
                              enc + ".layer" + std::to_string(s + 1) + ".block" + std::to_string(b),
                              o);
      in = stages_[s].back().out_channels();
    }
  }
  const int layer1_channels = stages_[0].back().out_channels();

  if (fused) {
    if (context_channels < 1) throw ConfigError("matting fusion needs context channels");
    fusion_ = nn::Projection(store, "matting.fusion.projection", context_channels, fc);
  }

  if (cfg.fusion == FusionPoint::PrePpm) in += fc;
  for (int g : cfg.ppm_grids) {
    ppm_branches_.emplace_back(store, "matting.decoder.ppm.grid" + std::to_string(g),
                               ConvUnit::Options{in, cfg.ppm_channels, 1, 1, 1, NormKind::None,
                                                 Activation::Relu});
  }
  in += static_cast<int>(cfg.ppm_grids.size()) * cfg.ppm_channels;
  ppm_fuse_ = ConvUnit(store, "matting.decoder.ppm.fuse",
                       {in, cfg.decoder_widths[0], 3, 1, 1, cfg.norm, Activation::Relu});
  in = cfg.decoder_widths[0] + (cfg.fusion == FusionPoint::PostPpm ? fc : 0);

  const std::array<int, 3> skip_channels{layer1_channels, cfg.stem_widths[2], kInputChannels};
  for (int i = 0; i < 4; ++i) {
    ResidualBlock::Options o;
    o.type = nn::BlockType::Basic;
    o.in = in;
    o.width = cfg.decoder_widths[i];
    o.norm = cfg.norm;
    decoder_[i] = ResidualBlock(store, "matting.decoder.block" + std::to_string(i + 1), o);
    in = cfg.decoder_widths[i] + (i < 3 ? skip_channels[i] : 0);
  }
  for (int i = 0; i < 2; ++i) {
    head_[i] = ConvUnit(store, "matting.head.conv" + std::to_string(i + 1),
                        {in, cfg.head_width, 3, 1, 1, cfg.norm, Activation::Relu});
    in = cfg.head_width;
  }
  head_out_ = nn::Projection(store, "matting.head.out", in, kOutputChannels);
}

Var MattingModule::fuse_context(const propagating::PropagationOutput& ctx, int inner_side,
                                int size) const {
  if (cfg_.fusion == FusionPoint::None) throw ConfigError("context fusion is disabled");
  const Var& f = ctx.context_features;
  const int tap_h = f.value().height(), tap_w = f.value().width();
  const auto& g = ctx.tap_geometry;
  const int context_side = g.offset + tap_h * g.scale;
  const int inner_offset = (context_side - inner_side) / 2;
  const nn::AxisMap rows = context_window_axis(g, tap_h, inner_offset, inner_side, size);
  const nn::AxisMap cols = context_window_axis(g, tap_w, inner_offset, inner_side, size);
  return fusion_.forward(nn::resample(f, rows, cols));
}

MattingTrace MattingModule::trace(const Var& input,
                                  const propagating::PropagationOutput* ctx) const {
  const nn::Tensor& v = input.value();
  if (v.rank() != 3 || v.channels() != kInputChannels) {
    throw DimensionError("matting input must be [6, H, W], got " + v.shape_string());
  }
  const int side = v.height();
  if (side != v.width() || side % cfg_.total_stride() != 0) {
    throw GeometryError("inner patch must be square with side divisible by " +
                        std::to_string(cfg_.total_stride()) + ", got " + v.shape_string());
  }
  const bool fused = cfg_.fusion != FusionPoint::None;
  if (fused && ctx == nullptr) throw ConfigError("matting fusion requires context features");

  MattingTrace t;
  t.input = input;
  Var x = input;
  if (cfg_.fusion == FusionPoint::Input) {
    t.context = fuse_context(*ctx, side, side);
    x = nn::concat_channels({x, t.context});
  }
  for (const auto& u : stem_) x = u.forward(x);
  t.stem = x;
  t.pooled = nn::max_pool(x, 3, 2, 1);
  x = t.pooled;
  for (int s = 0; s < 4; ++s) {
    for (const auto& b : stages_[s]) x = b.forward(x);
    t.stages[s] = x;
  }
  const int bh = x.value().height();
  if (cfg_.fusion == FusionPoint::PrePpm || cfg_.fusion == FusionPoint::PostPpm) {
    t.context = fuse_context(*ctx, side, bh);
  }
  if (cfg_.fusion == FusionPoint::PrePpm) x = nn::concat_channels({x, t.context});
  t.fused = x;

  std::vector<Var> parts{x};
  for (std::size_t i = 0; i < ppm_branches_.size(); ++i) {
    const Var pooled = cspp::csp_pool(x, cfg_.ppm_grids[i]);
    parts.push_back(nn::resize_bilinear(ppm_branches_[i].forward(pooled), bh, bh));
  }
  x = ppm_fuse_.forward(nn::concat_channels(parts));
  if (cfg_.fusion == FusionPoint::PostPpm) x = nn::concat_channels({x, t.context});
  t.ppm = x;

  const std::array<Var, 3> skips{t.stages[0], t.stem, input};
  for (int i = 0; i < 4; ++i) {
    x = decoder_[i].forward(x);
    if (i < 3) {
      const nn::Tensor& sv = skips[i].value();
      x = nn::concat_channels({nn::resize_bilinear(x, sv.height(), sv.width()), skips[i]});
    }
    t.decoder[i] = x;
  }
  for (const auto& u : head_) x = u.forward(x);
  const Var out = nn::sigmoid(head_out_.forward(x));
  t.output.raw = out;
  t.output.alpha = nn::slice_channels(out, 0, 1);
  t.output.fg = nn::slice_channels(out, 1, 4);
  t.output.bg = nn::slice_channels(out, 4, 7);
  return t;
}

MattingOutput MattingModule::forward(const Var& input,
                                     const propagating::PropagationOutput* ctx) const {
  return trace(input, ctx).output;
}

}  // namespace lfp::matting
