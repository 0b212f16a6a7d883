#include <benchmark/benchmark.h>

#include <random>

#include "setgan/bundle.hpp"
#include "setgan/inference.hpp"
#include "setgan/metrics.hpp"
#include "setgan/pyramid.hpp"
#include "setgan/trainer.hpp"

namespace {

using namespace setgan;

ImageGrid noise_image(int side, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  ImageGrid img(side, side);
  for (float& v : img.values()) v = u(rng);
  return img;
}

const TrainedBundle& chain() {
  static const TrainedBundle b = untrained_bundle(compute_scale_schedule({256, 256}, 256, 25, 4.0 / 3.0), 1);
  return b;
}

void BM_Ssim(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ImageGrid a = noise_image(side, 1), b = noise_image(side, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(128)->Arg(256);

void BM_Pyramid(benchmark::State& state) {
  const ImageGrid img = noise_image(256, 3);
  for (auto _ : state) {
    const ScaleSchedule s = compute_scale_schedule(img.dims(), 256, 25, 4.0 / 3.0);
    benchmark::DoNotOptimize(build_pyramid(img, s));
  }
}
BENCHMARK(BM_Pyramid)->Unit(benchmark::kMillisecond);

void BM_GenerateUpTo(benchmark::State& state) {
  GenerationRequest r;
  r.up_to_scale = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate(chain(), r));
}
BENCHMARK(BM_GenerateUpTo)->DenseRange(0, 8, 2)->Unit(benchmark::kMillisecond);

void BM_SerializeBundle(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(serialize_bundle(chain()));
}
BENCHMARK(BM_SerializeBundle)->Unit(benchmark::kMillisecond);

void BM_TrainIteration(benchmark::State& state) {
  TrainConfig c;
  c.iterations_per_scale = 1;
  c.max_dim = 32;
  c.min_dim = 25;
  const ImagePyramid p = prepare_pyramid(noise_image(32, 4), c);
  for (auto _ : state) benchmark::DoNotOptimize(train_scale(p, 0, c));
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
