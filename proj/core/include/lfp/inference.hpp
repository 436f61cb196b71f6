#pragma once

#include <string>
#include <vector>

#include "lfp/core.hpp"
#include "lfp/geometry.hpp"

namespace lfp {
class LfpModel;
}

namespace lfp::inference {

/// None: each pixel is taken from the tile whose centre is nearest along
/// each axis. LinearRamp: weighted mean with weights falling off over the
/// overlap.
enum class Blend { None, LinearRamp };

std::string to_string(Blend b);
Blend parse_blend(const std::string& s);

struct InferenceConfig {
  int inner_side = 1024;
  int overlap = 0;
  Blend blend = Blend::None;
  PadMode pad_mode = PadMode::Reflect;
  bool tta = false;
  bool skip_known_tiles = true;
  unsigned workers = 0;  // 0: worker_count()

  void validate() const;
};

/// Inner windows of side s at stride s - overlap along each axis, the last
/// one shifted inward to end at the border. An axis shorter than s gets a
/// single window at 0 that overhangs on the far side.
std::vector<PatchGeometry> plan_tiles(int height, int width, const InferenceConfig& cfg);

/// The 2s x 2s context around g's inner window.
ContextPair extract_context(const Image& image, const Trimap& trimap, const PatchGeometry& g,
                            PadMode mode);

struct TilePrediction {
  AlphaMatte alpha;
  ColorMap fg;
  ColorMap bg;
};

/// Anything that maps an inner patch plus its context to s x s predictions.
/// predict() is called concurrently from several threads.
class TileModel {
 public:
  virtual ~TileModel() = default;
  virtual TilePrediction predict(const Image& inner_image, const Trimap& inner_trimap,
                                 const ContextPair& context) const = 0;
};

/// Runs a trained LfpModel on each tile.
class NetworkTileModel final : public TileModel {
 public:
  explicit NetworkTileModel(const LfpModel& model) : model_(model) {}
  TilePrediction predict(const Image& inner_image, const Trimap& inner_trimap,
                         const ContextPair& context) const override;

 private:
  const LfpModel& model_;
};

struct InferenceResult {
  AlphaMatte alpha;      // clamped by the trimap
  AlphaMatte raw_alpha;  // stitched network output before clamping
  ColorMap fg;
  ColorMap bg;
  int tiles_evaluated = 0;
  int tiles_skipped = 0;
  int tiles_bisected = 0;
};

/// Per-pixel blend weight of position (y, x) inside a tile of side s.
double tile_weight(int y, int x, int side, const InferenceConfig& cfg);

InferenceResult run_tiled(const Image& image, const Trimap& trimap, const TileModel& model,
                          const InferenceConfig& cfg);

/// The four transforms averaged by run_tta.
enum class Flip { Identity, Horizontal, Vertical, Rotate180 };

template <class Map>
Map apply_flip(const Map& m, Flip f);
Trimap apply_flip(const Trimap& t, Flip f);

/// Mean of run_tiled over {identity, h-flip, v-flip, 180 degrees}, each
/// output mapped back before averaging.
InferenceResult run_tta(const Image& image, const Trimap& trimap, const TileModel& model,
                        const InferenceConfig& cfg);

/// run_tta when cfg.tta is set, run_tiled otherwise.
InferenceResult infer(const Image& image, const Trimap& trimap, const TileModel& model,
                      const InferenceConfig& cfg);

}  // namespace lfp::inference
