#include "lfp/nn/layers.hpp"

#include <cmath>
#include <random>

#include "lfp/errors.hpp"

namespace lfp::nn {

namespace {
constexpr double kNormEps = 1e-5;
}

Var ParamStore::create(const std::string& name, std::vector<int> shape, Init init, int fan_in) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  index_[name] = entries_.size();
  entries_.push_back({name, Var::leaf(Tensor(std::move(shape)), true), init, fan_in});
  return entries_.back().var;
}

const ParamStore::Entry* ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

Var ParamStore::at(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw ConfigError("no parameter named " + name);
  return e->var;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

std::size_t ParamStore::set_trainable(const std::function<bool(const std::string&)>& pred) {
  std::size_t n = 0;
  for (auto& e : entries_) {
    const bool on = pred(e.name);
    e.var.set_requires_grad(on);
    n += on;
  }
  return n;
}

void initialize_parameters(ParamStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& e : store.entries()) {
    Tensor& t = e.var.mutable_value();
    switch (e.init) {
      case Init::Ones:
        t.fill(1.0);
        break;
      case Init::Zeros:
        t.fill(0.0);
        break;
      case Init::Kaiming: {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / e.fan_in));
        for (double& v : t.values()) v = dist(rng);
        break;
      }
    }
    e.var.zero_grad();
  }
}

int group_count(int channels) {
  for (int g = std::min(8, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

ConvUnit::ConvUnit(ParamStore& store, const std::string& prefix, const Options& opt) : opt_(opt) {
  if (opt.kernel < 1 || opt.kernel % 2 == 0) {
    throw ConfigError(prefix + ": kernel must be odd and positive");
  }
  const int fan_in = opt.in * opt.kernel * opt.kernel;
  weight_ = store.create(prefix + ".weight", {opt.out, opt.in, opt.kernel, opt.kernel},
                         Init::Kaiming, fan_in);
  if (opt.norm == NormKind::Group) {
    gamma_ = store.create(prefix + ".norm.scale", {opt.out}, Init::Ones);
    beta_ = store.create(prefix + ".norm.offset", {opt.out}, Init::Zeros);
  } else {
    bias_ = store.create(prefix + ".bias", {opt.out}, Init::Zeros);
  }
}

ConvGeometry ConvUnit::geometry() const {
  return {opt_.stride, opt_.dilation * (opt_.kernel - 1) / 2, opt_.dilation};
}

Var ConvUnit::forward(const Var& x) const {
  Var y;
  if (opt_.norm == NormKind::Group) {
    const Var w = standardize_blocks(weight_, opt_.out, kNormEps);
    y = conv2d(x, w, Var(), geometry());
    y = standardize_blocks(y, group_count(opt_.out), kNormEps);
    y = channel_affine(y, gamma_, beta_);
  } else {
    y = conv2d(x, weight_, bias_, geometry());
  }
  return opt_.act == Activation::Relu ? relu(y) : y;
}

int expansion(BlockType t) { return t == BlockType::Bottleneck ? 4 : 1; }

ResidualBlock::ResidualBlock(ParamStore& store, const std::string& prefix, const Options& opt) {
  out_ = opt.width * expansion(opt.type);
  using U = ConvUnit::Options;
  if (opt.type == BlockType::Basic) {
    main_.emplace_back(store, prefix + ".conv1",
                       U{opt.in, opt.width, opt.kernel, opt.stride, opt.dilation, opt.norm,
                         Activation::Relu});
    main_.emplace_back(store, prefix + ".conv2",
                       U{opt.width, opt.width, opt.kernel, 1, opt.dilation, opt.norm,
                         Activation::None});
  } else {
    main_.emplace_back(store, prefix + ".conv1",
                       U{opt.in, opt.width, 1, 1, 1, opt.norm, Activation::Relu});
    main_.emplace_back(store, prefix + ".conv2",
                       U{opt.width, opt.width, opt.kernel, opt.stride, opt.dilation, opt.norm,
                         Activation::Relu});
    main_.emplace_back(store, prefix + ".conv3",
                       U{opt.width, out_, 1, 1, 1, opt.norm, Activation::None});
  }
  if (opt.in != out_ || opt.stride != 1) {
    has_shortcut_ = true;
    shortcut_ = ConvUnit(store, prefix + ".shortcut",
                         U{opt.in, out_, 1, opt.stride, 1, opt.norm, Activation::None});
  }
}

Var ResidualBlock::forward(const Var& x) const {
  Var y = x;
  for (const auto& u : main_) y = u.forward(y);
  const Var s = has_shortcut_ ? shortcut_.forward(x) : x;
  return relu(add(y, s));
}

Projection::Projection(ParamStore& store, const std::string& prefix, int in, int out, bool bias,
                       Init weight_init)
    : out_(out) {
  weight_ = store.create(prefix + ".weight", {out, in, 1, 1}, weight_init, in);
  if (bias) bias_ = store.create(prefix + ".bias", {out}, Init::Zeros);
}

Var Projection::forward(const Var& x) const { return conv2d(x, weight_, bias_, ConvGeometry{}); }

}  // namespace lfp::nn
