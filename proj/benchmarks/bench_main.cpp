#include <benchmark/benchmark.h>

#include "hufor/adalog.hpp"
#include "hufor/face_moe.hpp"
#include "hufor/gaussian.hpp"
#include "hufor/metrics.hpp"
#include "hufor/rng.hpp"

using namespace hufor;

namespace {

FeatureMap random_map(Rng& rng, int c, int h, int w) {
  FeatureMap x(c, h, w);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

void BM_GaussianSmooth(benchmark::State& state) {
  Rng rng(1);
  const auto x = random_map(rng, 8, 64, 64);
  const GaussianSpec spec{static_cast<double>(state.range(0)), 0, Padding::reflect};
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_smooth(x, spec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_GaussianSmooth)->Arg(1)->Arg(4)->Arg(15);

void BM_ResidualBank(benchmark::State& state) {
  Rng rng(2);
  const auto x = random_map(rng, 8, 32, 32);
  const auto bank = state.range(0) == 0 ? adalog::fine_bank() : adalog::coarse_bank();
  for (auto _ : state) benchmark::DoNotOptimize(adalog::log_residual_bank(x, bank));
}
BENCHMARK(BM_ResidualBank)->Arg(0)->Arg(1);

void BM_FaceForwardBackward(benchmark::State& state) {
  ParameterStore store;
  face::FaceConfig cfg;
  cfg.input_size = static_cast<int>(state.range(0));
  face::FaceBranch branch(store, cfg);
  Rng rng(3);
  branch.init(rng);
  const auto x = random_map(rng, 3, cfg.input_size, cfg.input_size);
  for (auto _ : state) {
    const auto out = branch.forward(x);
    benchmark::DoNotOptimize(branch.backward({}, out.probability - 1.0));
  }
}
BENCHMARK(BM_FaceForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
  Rng rng(4);
  metrics::ScoredSet set;
  for (int i = 0; i < state.range(0); ++i) {
    set.scores.push_back(rng.uniform());
    set.labels.push_back(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auc(set));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

}  // namespace
BENCHMARK_MAIN();
