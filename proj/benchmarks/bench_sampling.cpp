#include <benchmark/benchmark.h>

#include <random>

#include "encprop/propagation.hpp"
#include "encprop/training.hpp"

namespace {

using namespace encprop;

struct Fixture {
  UNetParams params = init_params(UNetConfig{});
  NoiseSchedule schedule = make_linear_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd);
  PropagationPlan plan = nonuniform_plan(kDefaultSteps, kDefaultKeySteps);
  Tensor z_T;

  explicit Fixture(std::size_t batch) {
    std::mt19937_64 rng(7);
    z_T = gaussian({batch, params.config.data_dim}, rng);
  }
};

void run_strategy(benchmark::State& state, Strategy strategy, DecodeMode mode) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  SampleOptions o;
  o.decode_mode = mode;
  o.workers = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) {
    SampleRun run = sample(strategy, f.plan, f.z_T, f.params, f.schedule, o);
    benchmark::DoNotOptimize(run.z0);
  }
}

void BM_Full(benchmark::State& state) { run_strategy(state, Strategy::full, DecodeMode::loop_ordered); }
void BM_EncoderProp(benchmark::State& state) { run_strategy(state, Strategy::encoder_prop, DecodeMode::loop_ordered); }
void BM_ParallelLoop(benchmark::State& state) {
  run_strategy(state, Strategy::encoder_prop_parallel, DecodeMode::loop_ordered);
}
void BM_ParallelBatched(benchmark::State& state) {
  run_strategy(state, Strategy::encoder_prop_parallel, DecodeMode::batched);
}

void BM_Encode(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const Tensor t_emb = time_embedding(25, f.params.config.time_embed_dim, kDefaultSteps);
  for (auto _ : state) benchmark::DoNotOptimize(encode(f.z_T, t_emb, f.params));
}

void BM_Decode(benchmark::State& state) {
  const Fixture f(static_cast<std::size_t>(state.range(0)));
  const Tensor t_emb = time_embedding(25, f.params.config.time_embed_dim, kDefaultSteps);
  const EncoderCache cache = encode(f.z_T, t_emb, f.params);
  for (auto _ : state) benchmark::DoNotOptimize(decode(cache, t_emb, f.params));
}

}  // namespace

BENCHMARK(BM_Full)->Args({256, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncoderProp)->Args({256, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ParallelLoop)->Args({256, 1})->Args({256, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ParallelBatched)->Args({256, 1})->Args({256, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Encode)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Decode)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
