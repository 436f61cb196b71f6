#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lfp/nn/autograd.hpp"

namespace lfp::nn {

enum class Init { Kaiming, Ones, Zeros };

/// Named parameter arrays of a model, in registration order. Names are
/// dotted paths such as "matting.decoder.block1.conv1.weight".
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    Init init = Init::Kaiming;
    int fan_in = 1;
  };

  Var create(const std::string& name, std::vector<int> shape, Init init, int fan_in = 1);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const Entry* find(const std::string& name) const;
  Var at(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  /// Marks each parameter trainable when the predicate accepts its name.
  /// Returns the number of trainable parameters.
  std::size_t set_trainable(const std::function<bool(const std::string&)>& pred);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Kaiming-normal weights (std = sqrt(2 / fan_in)), unit norm scales, zero
/// offsets; deterministic for a given seed and registration order.
void initialize_parameters(ParamStore& store, std::uint64_t seed);

enum class NormKind { Group, None };
enum class Activation { Relu, None };

/// Largest divisor of `channels` not exceeding 8.
int group_count(int channels);

/// Convolution followed either by weight standardisation + group norm or by
/// a bias, then an optional ReLU.
class ConvUnit {
 public:
  struct Options {
    int in = 1;
    int out = 1;
    int kernel = 3;
    int stride = 1;
    int dilation = 1;
    NormKind norm = NormKind::Group;
    Activation act = Activation::Relu;
  };

  ConvUnit() = default;
  ConvUnit(ParamStore& store, const std::string& prefix, const Options& opt);

  Var forward(const Var& x) const;
  const Options& options() const { return opt_; }
  ConvGeometry geometry() const;

 private:
  Options opt_;
  Var weight_;
  Var bias_;
  Var gamma_;
  Var beta_;
};

enum class BlockType { Basic, Bottleneck };

/// Residual block (basic: two k x k convs; bottleneck: 1x1, k x k, 1x1 with
/// expansion 4) with a projection shortcut when the shape changes.
class ResidualBlock {
 public:
  struct Options {
    BlockType type = BlockType::Basic;
    int in = 1;
    int width = 1;
    int stride = 1;
    int dilation = 1;
    int kernel = 3;
    NormKind norm = NormKind::Group;
  };

  ResidualBlock() = default;
  ResidualBlock(ParamStore& store, const std::string& prefix, const Options& opt);

  Var forward(const Var& x) const;
  int out_channels() const { return out_; }
  const std::vector<ConvUnit>& main_path() const { return main_; }
  bool has_projection() const { return has_shortcut_; }
  const ConvUnit& projection() const { return shortcut_; }

 private:
  std::vector<ConvUnit> main_;
  ConvUnit shortcut_;
  bool has_shortcut_ = false;
  int out_ = 0;
};

int expansion(BlockType t);

/// 1x1 convolution with bias and no activation.
class Projection {
 public:
  Projection() = default;
  Projection(ParamStore& store, const std::string& prefix, int in, int out, bool bias = true,
             Init weight_init = Init::Kaiming);
  Var forward(const Var& x) const;
  int out_channels() const { return out_; }

 private:
  Var weight_;
  Var bias_;
  int out_ = 0;
};

}  // namespace lfp::nn
