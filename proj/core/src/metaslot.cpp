#include "metaslot/metaslot.hpp"

#include <stdexcept>

#include "metaslot/ops.hpp"

namespace metaslot {

std::string to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::kSlotAttention: return "slot_attention";
    case AggregatorKind::kLearnedQuery: return "learned_query_sa";
    case AggregatorKind::kMetaSlot: return "metaslot";
  }
  return "unknown";
}

AggregatorKind aggregator_from_string(const std::string& name) {
  if (name == "slot_attention") return AggregatorKind::kSlotAttention;
  if (name == "learned_query_sa") return AggregatorKind::kLearnedQuery;
  if (name == "metaslot") return AggregatorKind::kMetaSlot;
  throw std::invalid_argument("unknown aggregator '" + name + "'");
}

namespace {

SlotState refine(const SlotState& state, const FeatureProjection& projection,
                 const SlotAttentionParams& params, const SlotMask& mask, Tensor* attention) {
  auto step = attention_step(state, projection, params, mask);
  if (attention) *attention = step.attention;
  return slot_update(state, step.increments, params, mask);
}

void check_features(const Tensor& features, const SlotAttentionParams& params) {
  if (features.rank() != 2 || features.cols() != params.config.dim) {
    throw ShapeError("aggregator: features must be [N x " + std::to_string(params.config.dim) +
                     "], got " + shape_string(features.shape()));
  }
}

MetaSlotOutput finish(SlotState state, SlotMask mask, Tensor attention, Tensor pre_final) {
  MetaSlotOutput out;
  out.final_slots = std::move(state);
  out.idx = mask.idx;
  out.active_count = mask.active_count();
  out.mask = std::move(mask);
  out.attention = std::move(attention);
  out.pre_final = std::move(pre_final);
  return out;
}

}  // namespace

MetaSlotPrefix metaslot_prefix(const Tensor& features, const SlotAttentionParams& params,
                               const PrototypeCodebook& codebook, const MetaSlotConfig& config,
                               Rng& rng, bool training) {
  check_features(features, params);
  if (config.iterations == 0) throw std::invalid_argument("metaslot: iterations must be >= 1");
  const std::size_t k = config.max_slots;

  MetaSlotPrefix prefix;
  prefix.init = init_slots(params, k, rng, !config.stochastic_stage_one);
  const SlotMask everyone = SlotMask::all(k);

  NoGradGuard no_grad;
  // Stage one: plain slot attention on clean features, fully detached.
  const FeatureProjection clean = project_features(features, params);
  SlotState state{ops::stop_gradient(prefix.init.slots), 0};
  for (std::size_t t = 0; t < config.iterations; ++t) {
    state = refine(state, clean, params, everyone, nullptr);
  }

  if (config.enable_codebook) {
    auto quantized = quantize(state.slots, codebook);
    prefix.mask = config.enable_mask ? prune_duplicates(quantized.idx) : SlotMask::all(k);
    prefix.mask.idx = quantized.idx;
    state = SlotState{std::move(quantized.slots), 0};
  } else {
    prefix.mask = everyone;
  }

  // Stage two without its last step: masked refinement on annealed noise.
  const NoiseSchedule schedule{training && config.enable_noise ? config.noise_sigma : 0.0,
                               config.iterations};
  for (std::size_t t = 0; t + 1 < config.iterations; ++t) {
    const double alpha = noise_sigma(t, schedule);
    const FeatureProjection projection =
        alpha > 0.0 ? project_features(inject_noise(features, alpha, rng), params) : clean;
    state = refine(state, projection, params, prefix.mask, nullptr);
  }
  prefix.detached = state.slots;
  return prefix;
}

MetaSlotOutput metaslot_final(const Tensor& features, const SlotAttentionParams& params,
                              const Tensor& detached, const Tensor& init, const Tensor& init_anchor,
                              const SlotMask& mask, const MetaSlotConfig& config) {
  Tensor pre_final =
      config.enable_straight_through
          ? ops::sub(ops::add(ops::stop_gradient(detached), init), init_anchor)
          : ops::stop_gradient(detached);
  // alpha_{T-1} is zero, so the recorded step sees clean features.
  Tensor attention;
  SlotState final_state = refine(SlotState{pre_final, config.iterations - 1},
                                 project_features(features, params), params, mask, &attention);
  return finish(std::move(final_state), mask, std::move(attention), std::move(pre_final));
}

MetaSlotOutput metaslot_forward(const Tensor& features, const SlotAttentionParams& params,
                                const PrototypeCodebook& codebook, const MetaSlotConfig& config,
                                Rng& rng, bool training) {
  MetaSlotPrefix prefix = metaslot_prefix(features, params, codebook, config, rng, training);
  return metaslot_final(features, params, prefix.detached, prefix.init.slots,
                        ops::stop_gradient(prefix.init.slots), prefix.mask, config);
}

MetaSlotOutput learned_query_forward(const Tensor& features, const SlotAttentionParams& params,
                                     const MetaSlotConfig& config, Rng& rng) {
  check_features(features, params);
  const std::size_t total = 2 * config.iterations;
  if (total == 0) throw std::invalid_argument("learned_query: iterations must be >= 1");
  const std::size_t k = config.max_slots;
  const SlotState init = init_slots(params, k, rng, true);
  const SlotMask everyone = SlotMask::all(k);

  SlotState state{ops::stop_gradient(init.slots), 0};
  {
    NoGradGuard no_grad;
    const FeatureProjection clean = project_features(features, params);
    for (std::size_t t = 0; t + 1 < total; ++t) state = refine(state, clean, params, everyone, nullptr);
  }
  return metaslot_final(features, params, state.slots, init.slots,
                        ops::stop_gradient(init.slots), everyone, config);
}

MetaSlotOutput slot_attention_forward(const Tensor& features, const SlotAttentionParams& params,
                                      const MetaSlotConfig& config, Rng& rng) {
  check_features(features, params);
  const std::size_t k = config.max_slots;
  const SlotState init = init_slots(params, k, rng, false);
  const SlotMask everyone = SlotMask::all(k);
  const FeatureProjection projection = project_features(features, params);
  SlotState state = init;
  Tensor pre_final = init.slots;
  Tensor attention;
  const std::size_t total = 2 * config.iterations;
  for (std::size_t t = 0; t < total; ++t) {
    if (t + 1 == total) pre_final = state.slots;
    state = refine(state, projection, params, everyone, &attention);
  }
  return finish(std::move(state), everyone, std::move(attention), std::move(pre_final));
}

MetaSlotOutput aggregate(AggregatorKind kind, const Tensor& features,
                         const SlotAttentionParams& params, const PrototypeCodebook& codebook,
                         const MetaSlotConfig& config, Rng& rng, bool training) {
  switch (kind) {
    case AggregatorKind::kSlotAttention: return slot_attention_forward(features, params, config, rng);
    case AggregatorKind::kLearnedQuery: return learned_query_forward(features, params, config, rng);
    case AggregatorKind::kMetaSlot:
      return metaslot_forward(features, params, codebook, config, rng, training);
  }
  throw std::invalid_argument("aggregate: unknown aggregator");
}

std::size_t update_codebook(PrototypeCodebook& codebook, std::span<const MetaSlotOutput> batch,
                            std::int64_t step, const MetaSlotConfig& config) {
  if (batch.empty()) return 0;
  std::vector<CodebookSample> samples;
  samples.reserve(batch.size());
  for (const auto& out : batch) {
    samples.push_back({ops::stop_gradient(out.final_slots.slots), out.mask});
  }
  ema_update(codebook, samples, step, config.ema_assignment);
  return revive_dead(codebook, samples, step);
}

}  // namespace metaslot
