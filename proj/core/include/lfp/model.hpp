#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "lfp/matting.hpp"
#include "lfp/propagating.hpp"

namespace lfp {

struct ModelConfig {
  propagating::PropagatingConfig propagating;
  matting::MattingConfig matting;
};

struct ModelOutput {
  propagating::PropagationOutput context;  // empty when fusion is off
  matting::MattingOutput matting;
};

/// Propagating module plus matting module over one shared parameter store.
/// Not copyable: layers hold handles into the store.
class LfpModel {
 public:
  explicit LfpModel(const ModelConfig& cfg, std::uint64_t seed = 0);
  LfpModel(const LfpModel&) = delete;
  LfpModel& operator=(const LfpModel&) = delete;

  /// inner: [6, s, s]; context: [6, 2s, 2s].
  ModelOutput forward(const nn::Var& inner, const nn::Var& context) const;
  ModelOutput forward(const Image& inner_image, const Trimap& inner_trimap,
                      const ContextPair& context) const;

  propagating::PropagationOutput propagate(const nn::Var& context) const {
    return propagating_.forward(context);
  }
  bool uses_context() const { return cfg_.matting.fusion != matting::FusionPoint::None; }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const propagating::PropagatingModule& propagating_module() const { return propagating_; }
  const matting::MattingModule& matting_module() const { return matting_; }

 private:
  ModelConfig cfg_;
  nn::ParamStore store_;
  propagating::PropagatingModule propagating_;
  matting::MattingModule matting_;
};

}  // namespace lfp
