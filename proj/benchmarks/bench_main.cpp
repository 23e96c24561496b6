#include <benchmark/benchmark.h>

#include <random>

#include "v2v/heatmap.hpp"
#include "v2v/network.hpp"
#include "v2v/ops.hpp"
#include "v2v/pipeline.hpp"
#include "v2v/synth.hpp"

using namespace v2v;

namespace {

// Occupancy-like input: `fill` of the voxels set to one.
Tensor<float> occupancy(std::size_t channels, std::size_t g, double fill) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution on(fill);
  Tensor<float> x({1, channels, g, g, g});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = on(rng) ? 1.0f : 0.0f;
  return x;
}

Tensor<float> weights(std::size_t out, std::size_t in, std::size_t k) {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n(0.0f, 0.01f);
  Tensor<float> w({out, in, k, k, k});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = n(rng);
  return w;
}

void BM_Conv3d(benchmark::State& state, ConvPath path) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const double fill = static_cast<double>(state.range(1)) / 100.0;
  const auto x = occupancy(1, 32, fill);
  const auto w = weights(16, 1, k);
  const ConvGeometry g{Dims3::cube(k), Dims3::cube(1), Dims3::cube(k / 2)};
  for (auto _ : state) benchmark::DoNotOptimize(conv3d_forward<float>(x, w, nullptr, g, path));
}
BENCHMARK_CAPTURE(BM_Conv3d, dense, ConvPath::dense)->Args({7, 3})->Args({7, 30})->Args({3, 3});
BENCHMARK_CAPTURE(BM_Conv3d, sparse, ConvPath::sparse)->Args({7, 3})->Args({7, 30})->Args({3, 3});

void BM_Conv3dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = occupancy(c, 16, 0.5);
  const auto w = weights(c, c, 3);
  const ConvGeometry g{Dims3::cube(3), Dims3::cube(1), Dims3::cube(1)};
  const auto y = conv3d_forward<float>(x, w, nullptr, g);
  for (auto _ : state) benchmark::DoNotOptimize(conv3d_backward(x, w, y, g, true, true));
}
BENCHMARK(BM_Conv3dBackward)->Arg(16)->Arg(32);

void BM_V2vForward(benchmark::State& state) {
  NetworkConfig cfg;
  cfg.base_channels = static_cast<std::size_t>(state.range(0));
  auto net = build_v2v<float>(cfg);
  const auto x = occupancy(1, 32, 0.03);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, Mode::infer));
}
BENCHMARK(BM_V2vForward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Voxelize(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto scene = generate_scene(HandModelSpec::default_hand(), SynthCamera{}, false, rng);
  const Frame f = frame_from_depth("bench", scene.frame);
  const auto cloud = reproject(f.depth, f.intrinsics);
  const CubicCrop crop{f.com_ref, 300.0, static_cast<std::size_t>(state.range(0))};
  std::vector<float> out(crop.grid_size * crop.grid_size * crop.grid_size);
  for (auto _ : state) {
    fill_occupancy(cloud, crop, out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["points"] = static_cast<double>(cloud.size());
}
BENCHMARK(BM_Voxelize)->Arg(32)->Arg(88);

void BM_HeatmapEncode(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> off(-140.0, 140.0);
  const CubicCrop crop{{0.0, 0.0, 700.0}, 300.0, 2 * static_cast<std::size_t>(state.range(0))};
  const HeatmapSpec spec{1.7, crop.grid_size / 2, 16};
  KeypointSet kps;
  for (int n = 0; n < 16; ++n) kps.push_back(crop.center + Point3{off(rng), off(rng), off(rng)});
  for (auto _ : state) benchmark::DoNotOptimize(encode(kps, crop, spec));
}
BENCHMARK(BM_HeatmapEncode)->Arg(16)->Arg(44);

void BM_HeatmapDecode(benchmark::State& state) {
  const CubicCrop crop{{0.0, 0.0, 700.0}, 300.0, 32};
  const auto vol = encode(KeypointSet(16, crop.center), crop, HeatmapSpec{1.7, 16, 16});
  for (auto _ : state) benchmark::DoNotOptimize(decode(vol, crop));
}
BENCHMARK(BM_HeatmapDecode);

}  // namespace
BENCHMARK_MAIN();
