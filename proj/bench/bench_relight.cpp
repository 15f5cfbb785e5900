// Serial reference kernels against the OpenMP kernels.

#include <benchmark/benchmark.h>

#include <omp.h>

#include <map>
#include <random>

#include "olatkit/oracle.hpp"
#include "olatkit/random.hpp"
#include "olatkit/relight.hpp"

using namespace olat;

namespace {

struct Scene {
  LightRig rig;
  std::vector<HdrImage> images;
  OlatStack stack;
  WeightVector weights;
};

const Scene& scene(std::size_t lights, std::size_t side) {
  static std::map<std::pair<std::size_t, std::size_t>, Scene> cache;
  auto [it, fresh] = cache.try_emplace({lights, side});
  if (fresh) {
    Scene& s = it->second;
    s.rig = oracle::generate_rig(lights);
    std::mt19937_64 rng(lights * 7919 + side);
    for (std::size_t l = 0; l < lights; ++l) {
      HdrImage img(side, side);
      for (float& v : img.data) v = static_cast<float>(uniform01(rng));
      s.images.push_back(std::move(img));
    }
    s.stack = OlatStack::from_images(s.rig, s.images);
    s.weights = env_to_weights(oracle::smooth_env(64, 128, 1), s.rig);
  }
  return it->second;
}

void set_counters(benchmark::State& state, std::size_t lights, std::size_t side) {
  state.counters["lights"] = static_cast<double>(lights);
  state.counters["threads"] = omp_get_max_threads();
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * lights * side * side * 3 * sizeof(float)));
}

void BM_combine_reference(benchmark::State& state) {
  const auto lights = static_cast<std::size_t>(state.range(0)), side = static_cast<std::size_t>(state.range(1));
  const Scene& s = scene(lights, side);
  for (auto _ : state) benchmark::DoNotOptimize(reference::combine(std::span<const HdrImage>(s.images), s.weights));
  set_counters(state, lights, side);
}

void BM_combine_parallel(benchmark::State& state) {
  const auto lights = static_cast<std::size_t>(state.range(0)), side = static_cast<std::size_t>(state.range(1));
  const Scene& s = scene(lights, side);
  for (auto _ : state) benchmark::DoNotOptimize(combine(s.stack, s.weights));
  set_counters(state, lights, side);
}

void BM_combine_parallel_f32(benchmark::State& state) {
  const auto lights = static_cast<std::size_t>(state.range(0)), side = static_cast<std::size_t>(state.range(1));
  const Scene& s = scene(lights, side);
  const TilePlan plan{256, 256, AccumPrecision::float32};
  for (auto _ : state) benchmark::DoNotOptimize(combine(s.stack, s.weights, plan));
  set_counters(state, lights, side);
}

void BM_env_to_weights(benchmark::State& state) {
  const auto height = static_cast<std::size_t>(state.range(0));
  const EnvMap env = oracle::smooth_env(height, 2 * height, 2);
  const LightRig rig = oracle::generate_rig(331);
  for (auto _ : state) benchmark::DoNotOptimize(env_to_weights(env, rig, 0.5));
  state.counters["texels"] = static_cast<double>(2 * height * height);
}

}  // namespace

BENCHMARK(BM_combine_reference)->Args({64, 256})->Args({331, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_combine_parallel)->Args({64, 256})->Args({331, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_combine_parallel_f32)->Args({331, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_env_to_weights)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
