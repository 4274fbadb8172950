#include <benchmark/benchmark.h>

#include <random>

#include "pdda/autodiff.hpp"
#include "pdda/guidance.hpp"
#include "pdda/sampler.hpp"
#include "pdda/score_model.hpp"

namespace {

using namespace pdda;

Tensor uniform(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = u(rng);
  return t;
}

// 3x3 convolution at the widest layer shape of the score network.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const Tensor x = uniform({4, c, hw, hw}, 1), w = uniform({c, c, 3, 3}, 2), b = uniform({c}, 3);
  for (auto _ : state) {
    ad::Graph g;
    const auto xv = g.variable(x);
    const auto y = ad::conv2d(xv, g.variable(w), g.variable(b));
    g.backward(ad::sum(y));
    benchmark::DoNotOptimize(g.grad(xv).data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({16, 16})->Args({32, 8})->Args({32, 4});

void BM_MatmulSquare(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = uniform({n, n}, 4), b = uniform({n, n}, 5);
  for (auto _ : state) {
    ad::Graph g(false);
    benchmark::DoNotOptimize(ad::matmul(g.constant(a), g.constant(b)).value().data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulSquare)->Arg(64)->Arg(256);

void BM_ScoreForward(benchmark::State& state) {
  const ScoreNetwork model(7);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({batch, 1, 16, 16}, 8);
  const std::vector<std::size_t> steps(batch, 50);
  for (auto _ : state) {
    ad::Graph g(false);
    benchmark::DoNotOptimize(model.forward(g, g.constant(x), steps).eps.value().data.data());
  }
}
BENCHMARK(BM_ScoreForward)->Arg(1)->Arg(32);

void BM_DsmTrainingStep(benchmark::State& state) {
  const ScoreNetwork model(9);
  const Tensor x0 = uniform({4, 1, 16, 16}, 10);
  const auto sched = make_schedule(100, ScheduleKind::linear);
  std::mt19937_64 rng(11);
  for (auto _ : state) {
    ad::Graph g;
    std::vector<ad::Var> params;
    g.backward(dsm_loss(model, g, x0, sched, rng, &params));
    benchmark::DoNotOptimize(g.grad(params.front()).data());
  }
}
BENCHMARK(BM_DsmTrainingStep);

// One guided reverse step: score pass, both keepers, projection.
void BM_GuidedStep(benchmark::State& state) {
  const ScoreNetwork model(12);
  const auto sched = make_schedule(100, ScheduleKind::linear);
  GuidanceConfig cfg;
  cfg.grad_through_score = state.range(0) != 0;
  const Tensor x_test = uniform({1, 16, 16}, 13);
  const PddaSampler sampler(model, sched, cfg, x_test, 14);
  const Tensor x = sampler.start();
  for (auto _ : state) benchmark::DoNotOptimize(sampler.run(x, 50, 49).data.data());
}
BENCHMARK(BM_GuidedStep)->Arg(1)->Arg(0)->ArgName("through_score");

void BM_UnguidedStep(benchmark::State& state) {
  const ScoreNetwork model(15);
  const auto sched = make_schedule(100, ScheduleKind::linear);
  GuidanceConfig cfg;
  const Tensor x_test = uniform({1, 16, 16}, 16);
  const PddaSampler sampler(model, sched, cfg, x_test, 17);
  const Tensor x = sampler.start();
  for (auto _ : state) benchmark::DoNotOptimize(sampler.run(x, 100, 99).data.data());
}
BENCHMARK(BM_UnguidedStep);

}  // namespace

BENCHMARK_MAIN();
