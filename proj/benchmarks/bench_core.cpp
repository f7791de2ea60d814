#include <benchmark/benchmark.h>

#include "rdm/metrics.hpp"
#include "rdm/nets.hpp"
#include "rdm/teacher.hpp"
#include "rdm/trainer.hpp"

namespace {

rdm::MlpParams random_params(const rdm::MlpShape& shape) {
  rdm::RngStream rng(1, 2);
  return rdm::init_residual_identity(shape, rng, 0.1);
}

void BM_MlpForward(benchmark::State& state) {
  const auto params = random_params({2, 1, static_cast<std::size_t>(state.range(0)), 2});
  const rdm::Vec x{0.3, -0.7};
  for (auto _ : state) benchmark::DoNotOptimize(rdm::mlp_forward(params, x, 0.5, 0));
}
BENCHMARK(BM_MlpForward)->Arg(16)->Arg(64)->Arg(256);

void BM_MlpBackward(benchmark::State& state) {
  const auto params = random_params({2, 1, static_cast<std::size_t>(state.range(0)), 2});
  const rdm::Vec x{0.3, -0.7}, u{1.0, -2.0};
  rdm::MlpTape tape;
  rdm::mlp_forward(params, x, 0.5, 0, &tape);
  rdm::MlpGrad grad(params.shape);
  for (auto _ : state) {
    rdm::mlp_backward(params, tape, u, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_MlpBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_EnergyDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto teacher = rdm::ring_gmm(8, 4.0, 0.05);
  rdm::RngStream a(3, 0), b(3, 1);
  const auto xa = rdm::gmm_sample_batch(teacher, a, n);
  const auto xb = rdm::gmm_sample_batch(teacher, b, n);
  for (auto _ : state) benchmark::DoNotOptimize(rdm::energy_distance(xa, xb));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}
BENCHMARK(BM_EnergyDistance)->RangeMultiplier(4)->Range(256, 4096)->Complexity(benchmark::oNSquared);

void BM_TrainRound(benchmark::State& state) {
  rdm::TrainConfig cfg;
  cfg.grpo.inner_updates = static_cast<std::size_t>(state.range(0));
  rdm::TrainState s = rdm::init_state(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(rdm::train_round(s, cfg));
}
BENCHMARK(BM_TrainRound)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
