#include "lfp/model.hpp"

namespace lfp {

LfpModel::LfpModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      propagating_(store_, cfg.propagating),
      matting_(store_, cfg.matting, propagating_.tap_channels()) {
  nn::initialize_parameters(store_, seed);
}

ModelOutput LfpModel::forward(const nn::Var& inner, const nn::Var& context) const {
  ModelOutput out;
  if (uses_context()) {
    out.context = propagating_.forward(context);
    out.matting = matting_.forward(inner, &out.context);
  } else {
    out.matting = matting_.forward(inner, nullptr);
  }
  return out;
}

ModelOutput LfpModel::forward(const Image& inner_image, const Trimap& inner_trimap,
                              const ContextPair& context) const {
  const nn::Var inner = nn::Var::constant(propagating::network_input(inner_image, inner_trimap));
  const nn::Var ctx =
      nn::Var::constant(propagating::network_input(context.image, context.trimap));
  return forward(inner, ctx);
}

}  // namespace lfp
