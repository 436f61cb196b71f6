#include "lfp/cspp.hpp"

#include "lfp/errors.hpp"
#include "lfp/nn/resample.hpp"

namespace lfp::cspp {

using nn::Activation;
using nn::ConvUnit;
using nn::NormKind;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::None:
      return "none";
    case Variant::NonLocal:
      return "nonlocal";
    case Variant::Aspp:
      return "aspp";
    case Variant::Cspp:
      return "cspp";
  }
  return "cspp";
}

Variant parse_variant(const std::string& s) {
  if (s == "none") return Variant::None;
  if (s == "nonlocal") return Variant::NonLocal;
  if (s == "aspp") return Variant::Aspp;
  if (s == "cspp") return Variant::Cspp;
  throw ConfigError("unknown bottleneck variant '" + s + "'");
}

namespace {

void require_increasing(const std::vector<int>& v, const char* what) {
  if (v.empty()) throw ConfigError(std::string(what) + " must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 1 || (i > 0 && v[i] <= v[i - 1])) {
      throw ConfigError(std::string(what) + " must be strictly increasing positive integers");
    }
  }
}

Var upsample(const Var& x, int h, int w, UpsampleMode mode) {
  return mode == UpsampleMode::Bilinear ? nn::resize_bilinear(x, h, w)
                                        : nn::resize_nearest(x, h, w);
}

}  // namespace

void CsppConfig::validate() const {
  require_increasing(csp_grids, "bottleneck.grids");
  require_increasing(aspp_rates, "bottleneck.rates");
  if (csp_branch_channels < 0 || aspp_branch_channels < 1 || fuse_channels < 1) {
    throw ConfigError("bottleneck channel counts must be positive");
  }
}

Var csp_pool(const Var& f, int grid) {
  const int H = f.value().height(), W = f.value().width();
  if (grid < 1 || grid > std::min(H, W)) {
    throw ParameterError("csp_pool: grid " + std::to_string(grid) + " exceeds feature map " +
                         std::to_string(H) + "x" + std::to_string(W));
  }
  return nn::resample(f, nn::block_average_axis(H, grid), nn::block_average_axis(W, grid));
}

CenterSurroundPooling::CenterSurroundPooling(nn::ParamStore& store, const std::string& prefix,
                                             int in_channels, const CsppConfig& cfg)
    : cfg_(cfg), in_(in_channels) {
  cfg.validate();
  branch_channels_ =
      cfg.csp_branch_channels > 0 ? cfg.csp_branch_channels : std::max(1, in_channels / 4);
  // Pooled cells are too few for group statistics, so branches use a bias.
  const Activation act = cfg.linear ? Activation::None : Activation::Relu;
  for (int g : cfg.csp_grids) {
    branches_.emplace_back(store, prefix + ".grid" + std::to_string(g),
                           ConvUnit::Options{in_channels, branch_channels_, 1, 1, 1,
                                             NormKind::None, act});
  }
}

Var CenterSurroundPooling::forward(const Var& f) const {
  if (f.value().channels() != in_) {
    throw ConfigError("csp: expected " + std::to_string(in_) + " channels, got " +
                      std::to_string(f.value().channels()));
  }
  const int H = f.value().height(), W = f.value().width();
  std::vector<Var> parts{f};
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const Var pooled = csp_pool(f, cfg_.csp_grids[i]);
    parts.push_back(upsample(branches_[i].forward(pooled), H, W, cfg_.upsample));
  }
  return nn::concat_channels(parts);
}

Aspp::Aspp(nn::ParamStore& store, const std::string& prefix, int in_channels,
           const CsppConfig& cfg)
    : cfg_(cfg), in_(in_channels) {
  cfg.validate();
  const NormKind norm = cfg.linear ? NormKind::None : NormKind::Group;
  const Activation act = cfg.linear ? Activation::None : Activation::Relu;
  const int b = cfg.aspp_branch_channels;
  point_ = ConvUnit(store, prefix + ".point", {in_channels, b, 1, 1, 1, norm, act});
  image_pool_ =
      ConvUnit(store, prefix + ".image_pool", {in_channels, b, 1, 1, 1, NormKind::None, act});
  for (int r : cfg.aspp_rates) {
    dilated_.emplace_back(store, prefix + ".rate" + std::to_string(r),
                          ConvUnit::Options{in_channels, b, 3, 1, r, norm, act});
  }
  if (cfg.fusion_projection) {
    fuse_ = ConvUnit(store, prefix + ".fuse",
                     {concat_channels(), cfg.fuse_channels, 1, 1, 1, norm, act});
  }
}

int Aspp::out_channels() const {
  return cfg_.fusion_projection ? cfg_.fuse_channels : concat_channels();
}

Var Aspp::branches(const Var& f) const {
  if (f.value().channels() != in_) {
    throw ConfigError("aspp: expected " + std::to_string(in_) + " channels, got " +
                      std::to_string(f.value().channels()));
  }
  const int H = f.value().height(), W = f.value().width();
  std::vector<Var> parts;
  parts.push_back(point_.forward(f));
  parts.push_back(nn::resize_bilinear(image_pool_.forward(csp_pool(f, 1)), H, W));
  for (const auto& d : dilated_) parts.push_back(d.forward(f));
  return nn::concat_channels(parts);
}

Var Aspp::forward(const Var& f) const {
  const Var cat = branches(f);
  return cfg_.fusion_projection ? fuse_.forward(cat) : cat;
}

NonLocalBlock::NonLocalBlock(nn::ParamStore& store, const std::string& prefix, int in_channels) {
  const int inner = std::max(1, in_channels / 2);
  theta_ = nn::Projection(store, prefix + ".theta", in_channels, inner);
  phi_ = nn::Projection(store, prefix + ".phi", in_channels, inner);
  g_ = nn::Projection(store, prefix + ".g", in_channels, inner);
  out_ = nn::Projection(store, prefix + ".out", inner, in_channels);
}

Var NonLocalBlock::forward(const Var& f) const {
  const Var y = nn::attention(theta_.forward(f), phi_.forward(f), g_.forward(f));
  return nn::add(f, out_.forward(y));
}

Bottleneck::Bottleneck(nn::ParamStore& store, const std::string& prefix, int in_channels,
                       Variant variant, const CsppConfig& cfg)
    : variant_(variant) {
  cfg.validate();
  switch (variant) {
    case Variant::None:
      projection_ = nn::Projection(store, prefix + ".projection", in_channels, cfg.fuse_channels);
      out_ = cfg.fuse_channels;
      break;
    case Variant::NonLocal:
      nonlocal_ = NonLocalBlock(store, prefix + ".nonlocal", in_channels);
      projection_ = nn::Projection(store, prefix + ".projection", in_channels, cfg.fuse_channels);
      out_ = cfg.fuse_channels;
      break;
    case Variant::Aspp:
      aspp_ = Aspp(store, prefix + ".aspp", in_channels, cfg);
      out_ = aspp_.out_channels();
      break;
    case Variant::Cspp:
      csp_ = CenterSurroundPooling(store, prefix + ".csp", in_channels, cfg);
      aspp_ = Aspp(store, prefix + ".aspp", csp_.out_channels(), cfg);
      out_ = aspp_.out_channels();
      break;
  }
}

Var Bottleneck::forward(const Var& f) const {
  switch (variant_) {
    case Variant::None:
      return projection_.forward(f);
    case Variant::NonLocal:
      return projection_.forward(nonlocal_.forward(f));
    case Variant::Aspp:
      return aspp_.forward(f);
    case Variant::Cspp:
      return aspp_.forward(csp_.forward(f));
  }
  throw ConfigError("unknown bottleneck variant");
}

}  // namespace lfp::cspp
