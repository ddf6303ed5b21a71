// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "c2fdet/backbone.hpp"
#include "c2fdet/detector.hpp"
#include "c2fdet/finedet.hpp"
#include "c2fdet/hungarian.hpp"
#include "c2fdet/metrics.hpp"
#include "c2fdet/synthdata.hpp"

using namespace c2f;

static void BM_GenerateFrame(benchmark::State& state) {
  synth::SceneConfig c;
  c.clip_length = 1;
  for (auto _ : state) {
    c.rng_seed++;
    benchmark::DoNotOptimize(synth::generate_clip(c));
  }
}
BENCHMARK(BM_GenerateFrame)->Unit(benchmark::kMillisecond);

static void BM_BackboneForward(benchmark::State& state) {
  torch::set_num_threads(1);
  torch::manual_seed(0);
  model::Backbone net(model::BackboneConfig::preset("toy"));
  net->eval();
  torch::NoGradGuard g;
  const auto x = torch::randn({state.range(0), 3, 192, 256});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x).fused);
}
BENCHMARK(BM_BackboneForward)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_DetectorTrainStep(benchmark::State& state) {
  torch::set_num_threads(1);
  auto d = model::make_detector(model::ModelConfig{}, 0);
  std::mt19937_64 rng(0);
  const auto x = torch::randn({state.range(0), 3, 192, 256});
  for (auto _ : state) {
    auto out = d->forward(x, rng);
    out.decoder.final_boxes().sum().backward();
  }
}
BENCHMARK(BM_DetectorTrainStep)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_Assignment(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), cols = static_cast<int>(state.range(1));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> cost(static_cast<std::size_t>(rows) * cols);
  for (auto& c : cost) c = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(cost, rows, cols));
}
BENCHMARK(BM_Assignment)->Args({100, 2})->Args({100, 20})->Args({300, 300});

static void BM_ExtractRegions(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution on(0.05);
  BinaryMask m(32, 24);
  for (auto& v : m.data) v = on(rng);
  for (auto _ : state) benchmark::DoNotOptimize(model::extract_regions(m));
}
BENCHMARK(BM_ExtractRegions);

static void BM_Evaluate(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 200);
  std::vector<metrics::ImageEval> images(static_cast<std::size_t>(state.range(0)));
  for (auto& img : images) {
    for (int g = 0; g < 2; ++g) {
      const double x = u(rng), y = u(rng);
      img.gts.push_back({x, y, x + 8, y + 6});
    }
    for (int d = 0; d < 100; ++d) {
      const double x = u(rng), y = u(rng);
      img.detections.push_back({{x, y, x + 8, y + 6}, u(rng) / 200});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(images));
}
BENCHMARK(BM_Evaluate)->Arg(16)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
