#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "bgm/augment.hpp"
#include "bgm/datasetgen.hpp"
#include "bgm/model.hpp"
#include "bgm/nnops.hpp"
#include "bgm/refiner.hpp"

using namespace bgm;

namespace {

Tensor4 noise(int n, int c, int h, int w, unsigned seed) {
  Tensor4 t(n, c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.values()) v = u(rng);
  return t;
}

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.base.stage_channels = {8, 16, 32, 64};
  cfg.base.aspp_channels = 32;
  return cfg;
}

}  // namespace

static void BM_Conv3x3(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  ConvSpec spec;
  spec.in_ch = spec.out_ch = ch;
  const Tensor4 x = noise(1, ch, size, size, 1);
  const std::vector<double> w(spec.weight_count(), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, spec, w));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(spec.weight_count()) * size * size);
}
BENCHMARK(BM_Conv3x3)->Args({16, 64})->Args({32, 64})->Args({64, 32})->Unit(benchmark::kMicrosecond);

static void BM_Conv3x3Backward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  ConvSpec spec;
  spec.in_ch = spec.out_ch = ch;
  const Tensor4 x = noise(1, ch, 64, 64, 2);
  const Tensor4 dy = noise(1, ch, 64, 64, 3);
  const std::vector<double> w(spec.weight_count(), 0.01);
  std::vector<double> dw(spec.weight_count());
  for (auto _ : state) {
    Tensor4 dx(x.shape());
    conv2d_backward(x, spec, w, dy, &dx, dw, {});
    benchmark::DoNotOptimize(dx.values().data());
  }
}
BENCHMARK(BM_Conv3x3Backward)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

static void BM_SelectPatches(benchmark::State& state) {
  const Tensor4 e4 = noise(1, 1, 128, 128, 4);
  RefineConfig cfg;
  cfg.k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(select_patches(e4, cfg));
}
BENCHMARK(BM_SelectPatches)->Arg(64)->Arg(1024)->Arg(16384)->Unit(benchmark::kMicrosecond);

static void BM_BaseForward(benchmark::State& state) {
  MattingModel model(small_model(), 1);
  const int size = static_cast<int>(state.range(0));
  const Tensor4 image = noise(1, 3, size, size, 5);
  const Tensor4 bg = noise(1, 3, size, size, 6);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_base(image, bg, 4, Mode::eval));
}
BENCHMARK(BM_BaseForward)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

// Full pass-through at 256x256 as the patch budget grows; 4096 is every cell.
static void BM_ForwardWithRefinement(benchmark::State& state) {
  MattingModel model(small_model(), 1);
  const Tensor4 image = noise(1, 3, 256, 256, 7);
  const Tensor4 bg = noise(1, 3, 256, 256, 8);
  RefineConfig rcfg;
  rcfg.k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(image, bg, rcfg, Mode::eval));
  state.counters["patches"] = static_cast<double>(rcfg.k);
}
BENCHMARK(BM_ForwardWithRefinement)->Arg(0)->Arg(164)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

static void BM_AugmentBatch(benchmark::State& state) {
  SynthSpec spec;
  spec.size_lo = spec.size_hi = 160;
  spec.size_multiple = 16;
  std::vector<SynthSample> raw;
  for (std::uint64_t i = 0; i < 4; ++i) raw.push_back(generate_sample(spec, 30 + i));
  std::vector<SourceTriple> sources;
  for (const auto& s : raw) sources.push_back({&s.fg, &s.alpha, &s.bg});
  AugmentConfig cfg;
  cfg.crop_lo = cfg.crop_hi = 128;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(augment_batch(sources, cfg, seed++));
}
BENCHMARK(BM_AugmentBatch)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
