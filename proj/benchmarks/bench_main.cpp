// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "octsr/generator.hpp"
#include "octsr/metrics.hpp"
#include "octsr/octree.hpp"
#include "octsr/sparse.hpp"
#include "octsr/volume.hpp"

using namespace octsr;

namespace {

// Blocky random labels: coarse noise replicated up by `block`.
LabelVolume blocky(std::int64_t edge, int block, int classes, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t c = edge / block;
  std::vector<std::uint8_t> data(static_cast<std::size_t>(c * c * c));
  for (auto& v : data) v = static_cast<std::uint8_t>(uniform_index(rng, static_cast<std::uint64_t>(classes)));
  return upsample_replicate(LabelVolume({c, c, c}, classes, std::move(data)), block);
}

void BM_OctreeBuild(benchmark::State& state) {
  const auto edge = state.range(0);
  const LabelVolume v = blocky(edge, 4, 4, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_octree(v, 4, static_cast<int>(edge / 16)));
  state.SetItemsProcessed(state.iterations() * v.dims().count());
}
BENCHMARK(BM_OctreeBuild)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_SparseConv3(benchmark::State& state) {
  const std::int32_t grid = 32;
  const int channels = static_cast<int>(state.range(0));
  const double occupancy = static_cast<double>(state.range(1)) / 100.0;
  Rng rng(2);
  std::vector<SparseCoord> coords;
  for (std::int32_t z = 0; z < grid; ++z)
    for (std::int32_t y = 0; y < grid; ++y)
      for (std::int32_t x = 0; x < grid; ++x)
        if (uniform01(rng) < occupancy) coords.push_back(SparseCoord{0, x, y, z});
  auto set = std::make_shared<const CoordSet>(1, grid, std::move(coords));
  const KernelMap map = build_kernel_map(*set, 3);
  Tensor feat(Shape{set->size(), channels});
  for (auto& v : feat.data) v = uniform01(rng) - 0.5;
  Tensor w(Shape{27, channels, channels});
  for (auto& v : w.data) v = (uniform01(rng) - 0.5) * 0.1;
  for (auto _ : state) {
    Tape t;
    const SparseVar x{set, t.input(feat)};
    const SparseVar y = sparse_conv3(t, x, t.input(w), Var{}, map);
    t.backward(sum(t, y.features));
    benchmark::DoNotOptimize(t.grad(x.features).data());
  }
  state.SetItemsProcessed(state.iterations() * set->size());
}
BENCHMARK(BM_SparseConv3)->Args({16, 10})->Args({16, 50})->Args({32, 10})->Unit(benchmark::kMillisecond);

void BM_TwoPointCorrelation(benchmark::State& state) {
  const LabelVolume v = blocky(state.range(0), 2, 4, 3);
  for (auto _ : state) benchmark::DoNotOptimize(two_point_correlation(v, 0, 32));
}
BENCHMARK(BM_TwoPointCorrelation)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SurfaceArea(benchmark::State& state) {
  const LabelVolume v = blocky(state.range(0), 2, 4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(relative_surface_area(v));
  state.SetItemsProcessed(state.iterations() * v.dims().count());
}
BENCHMARK(BM_SurfaceArea)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_GenerateDesk(benchmark::State& state) {
  const Generator g(GeneratorConfig::desk(), 5);
  const LabelVolume lr = blocky(8, 2, 4, 5);
  for (auto _ : state) benchmark::DoNotOptimize(generate(g, lr, 7));
}
BENCHMARK(BM_GenerateDesk)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
