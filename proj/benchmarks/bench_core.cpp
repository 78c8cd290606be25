#include <benchmark/benchmark.h>

#include "metaslot/decoder.hpp"
#include "metaslot/metaslot.hpp"
#include "metaslot/model.hpp"
#include "metaslot/ops.hpp"
#include "metaslot/trainer.hpp"

using namespace metaslot;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = standard_normal(rng);
  return Tensor({r, c}, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_matrix(n, 8, rng), b = random_matrix(8, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_AttentionStep(benchmark::State& state) {
  TrainConfig config;
  const auto model = Model::create(config);
  const auto scene = generate_scene(3, config.scene);
  Rng rng(2);
  const auto init = init_slots(model.slot_attention, config.metaslot.max_slots, rng, true);
  const auto projection = project_features(scene.features, model.slot_attention);
  const auto mask = SlotMask::all(config.metaslot.max_slots);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(attention_step(init, projection, model.slot_attention, mask));
}
BENCHMARK(BM_AttentionStep);

void BM_Forward(benchmark::State& state) {
  TrainConfig config;
  config.aggregator = static_cast<AggregatorKind>(state.range(0));
  const auto model = Model::create(config);
  const auto scene = generate_scene(4, config.scene);
  NoGradGuard no_grad;
  for (auto _ : state) {
    Rng rng(5);
    const auto out = aggregate(config.aggregator, scene.features, model.slot_attention, model.codebook,
                               config.metaslot, rng, true);
    benchmark::DoNotOptimize(decode(out.final_slots.slots, out.mask, model.decoder));
  }
  state.SetLabel(to_string(config.aggregator));
}
BENCHMARK(BM_Forward)->DenseRange(0, 2);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig config;
  config.steps = 1;
  config.batch_size = static_cast<std::size_t>(state.range(0));
  config.eval_every = 1000;
  config.eval_scenes = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(config));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
