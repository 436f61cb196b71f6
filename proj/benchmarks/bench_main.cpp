#include <benchmark/benchmark.h>

#include <random>

#include "lfp/analysis.hpp"
#include "lfp/config.hpp"
#include "lfp/inference.hpp"
#include "lfp/model.hpp"

namespace {

using namespace lfp;
using nn::Tensor;
using nn::Var;

Tensor noise(std::mt19937_64& r, std::vector<int> shape) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : t.values()) v = u(r);
  return t;
}

void BM_Conv3x3(benchmark::State& st) {
  const int side = static_cast<int>(st.range(0)), ch = static_cast<int>(st.range(1));
  std::mt19937_64 r(1);
  const Var x = Var::constant(noise(r, {ch, side, side}));
  const Var w = Var::constant(noise(r, {ch, ch, 3, 3}));
  const Var b = Var::constant(noise(r, {ch}));
  for (auto _ : st) benchmark::DoNotOptimize(nn::conv2d(x, w, b, {1, 1, 1}).value().size());
  st.SetItemsProcessed(st.iterations() * side * side * ch * ch * 9);
}
BENCHMARK(BM_Conv3x3)->Args({64, 16})->Args({128, 8})->Args({32, 64});

void BM_Conv3x3Backward(benchmark::State& st) {
  const int side = static_cast<int>(st.range(0)), ch = static_cast<int>(st.range(1));
  std::mt19937_64 r(2);
  const Tensor xt = noise(r, {ch, side, side}), wt = noise(r, {ch, ch, 3, 3});
  for (auto _ : st) {
    Var x = Var::leaf(xt), w = Var::leaf(wt);
    nn::backward(nn::sum(nn::conv2d(x, w, Var(), {1, 1, 1})));
    benchmark::DoNotOptimize(w.grad().size());
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({64, 16});

void BM_DistanceTransform(benchmark::State& st) {
  const int side = static_cast<int>(st.range(0));
  std::mt19937_64 r(3);
  std::bernoulli_distribution known(0.02);
  Trimap t(side, side, Label::Unknown);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (known(r)) t(y, x) = Label::Foreground;
    }
  }
  for (auto _ : st) benchmark::DoNotOptimize(analysis::distance_to_known(t, Label::Foreground).values.data());
  st.SetItemsProcessed(st.iterations() * side * side);
}
BENCHMARK(BM_DistanceTransform)->Arg(256)->Arg(1024);

void BM_TinyForward(benchmark::State& st) {
  const auto cfg = config::preset("tiny");
  const LfpModel model(cfg.model(), cfg.core.seed);
  const int s = cfg.inference.inner_side;
  std::mt19937_64 r(4);
  const Var inner = Var::constant(noise(r, {6, s, s})), ctx = Var::constant(noise(r, {6, 2 * s, 2 * s}));
  for (auto _ : st) benchmark::DoNotOptimize(model.forward(inner, ctx).matting.alpha.value().size());
}
BENCHMARK(BM_TinyForward)->Unit(benchmark::kMillisecond);

void BM_TinyTiledInference(benchmark::State& st) {
  const auto cfg = config::preset("tiny");
  const LfpModel model(cfg.model(), cfg.core.seed);
  std::mt19937_64 r(5);
  const Image img = Image::clipped(noise(r, {3, 200, 300}));
  const Trimap tri(200, 300, Label::Unknown);
  const inference::NetworkTileModel tm(model);
  for (auto _ : st) benchmark::DoNotOptimize(inference::run_tiled(img, tri, tm, cfg.inference).alpha.height());
}
BENCHMARK(BM_TinyTiledInference)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
