#include <benchmark/benchmark.h>

#include "fader/head.hpp"
#include "fader/masking.hpp"
#include "fader/nn.hpp"
#include "fader/scoring.hpp"
#include "fader/unet.hpp"

using namespace fader;

namespace {

Tensor random_image(int64_t h, int64_t w, int64_t c, uint64_t seed) {
  auto rng = make_rng(seed);
  Tensor t({h, w, c});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rand_unit(rng);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  auto rng = make_rng(1);
  nn::Conv2d<float> conv("c", 8, 8, 1, rng);
  TensorF x({8, 8, 64, 64});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rand_unit(rng));
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
}
BENCHMARK(BM_Conv2dForward)->Unit(benchmark::kMillisecond);

void BM_UnetForward64(benchmark::State& state) {
  nn::UNetConfig cfg;
  cfg.depth = 5;
  cfg.base_channels = 8;
  nn::UNet<float> net(cfg, 2);
  net.set_training(false);
  auto rng = make_rng(3);
  TensorF x({1, 3, 64, 64});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rand_unit(rng));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_UnetForward64)->Unit(benchmark::kMillisecond);

void BM_GmsMap(benchmark::State& state) {
  const Tensor a = random_image(64, 64, 3, 4);
  const Tensor b = random_image(64, 64, 3, 5);
  for (auto _ : state) benchmark::DoNotOptimize(score::gms_map(a, b));
}
BENCHMARK(BM_GmsMap)->Unit(benchmark::kMicrosecond);

void BM_MsgmsAnomalyMap(benchmark::State& state) {
  const Tensor a = random_image(64, 64, 3, 6);
  const Tensor b = random_image(64, 64, 3, 7);
  for (auto _ : state) benchmark::DoNotOptimize(score::msgms_anomaly_map(a, b, 2));
}
BENCHMARK(BM_MsgmsAnomalyMap)->Unit(benchmark::kMicrosecond);

void BM_RankingLossAllPairs(benchmark::State& state) {
  auto rng = make_rng(8);
  const int64_t n = state.range(0);
  Tensor pred({n}), gt({n});
  for (int64_t i = 0; i < n; ++i) {
    pred[i] = rand_unit(rng);
    gt[i] = rand_unit(rng);
  }
  head::RankingConfig cfg;
  Tensor grad;
  for (auto _ : state) benchmark::DoNotOptimize(head::margin_ranking_loss(pred, gt, cfg, &grad));
}
BENCHMARK(BM_RankingLossAllPairs)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Tokenize(benchmark::State& state) {
  const Tensor img = random_image(64, 64, 3, 9);
  for (auto _ : state) benchmark::DoNotOptimize(head::tokenize(img, 8));
}
BENCHMARK(BM_Tokenize)->Unit(benchmark::kMicrosecond);

void BM_MosaicObfuscate(benchmark::State& state) {
  const Tensor img = random_image(64, 64, 3, 10);
  const Tensor keep = mask::saliency_mask(img, 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(mask::mosaic_obfuscate(img, keep, 8));
}
BENCHMARK(BM_MosaicObfuscate)->Unit(benchmark::kMicrosecond);

void BM_SaliencyMask(benchmark::State& state) {
  const Tensor img = random_image(64, 64, 3, 11);
  for (auto _ : state) benchmark::DoNotOptimize(mask::saliency_mask(img, 0.6));
}
BENCHMARK(BM_SaliencyMask)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
