#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "metaslot/codebook.hpp"
#include "metaslot/noise.hpp"
#include "metaslot/slot_attention.hpp"

namespace metaslot {

enum class AggregatorKind {
  kSlotAttention,   // shared Gaussian init, 2T fully differentiable steps
  kLearnedQuery,    // per-slot learned queries, bi-level 2T steps
  kMetaSlot,
};

std::string to_string(AggregatorKind kind);
AggregatorKind aggregator_from_string(const std::string& name);

struct MetaSlotConfig {
  std::size_t max_slots = 6;
  std::size_t iterations = 3;  // per stage
  double noise_sigma = 0.5;
  CodebookConfig codebook;
  bool enable_noise = true;
  bool enable_mask = true;
  bool enable_straight_through = true;
  /// false skips quantisation: stage two starts from the stage-one slots.
  bool enable_codebook = true;
  bool stochastic_stage_one = false;
  EmaAssignment ema_assignment = EmaAssignment::kRequantize;
};

struct MetaSlotOutput {
  SlotState final_slots;
  SlotMask mask;
  std::vector<std::size_t> idx;
  Tensor attention;  // [N x K] from the final refinement step
  std::size_t active_count = 0;
  /// Slots entering the final refinement step, for diagnostics.
  Tensor pre_final;
};

/// Everything before the gradient-carrying step: the learned-query init (on
/// the tape), the detached slots after stage one, quantisation, pruning and
/// the noisy stage-two prefix, and the duplicate mask.
struct MetaSlotPrefix {
  SlotState init;
  Tensor detached;  // slots entering the straight-through step
  SlotMask mask;
};

MetaSlotPrefix metaslot_prefix(const Tensor& features, const SlotAttentionParams& params,
                               const PrototypeCodebook& codebook, const MetaSlotConfig& config,
                               Rng& rng, bool training);

/// Straight-through coupling SG(detached) + init - init_anchor, then one masked
/// refinement step on clean features. `init_anchor` is the stop-gradient copy
/// of `init`; passing a frozen copy evaluates the surrogate whose plain
/// derivative equals the straight-through gradient.
MetaSlotOutput metaslot_final(const Tensor& features, const SlotAttentionParams& params,
                              const Tensor& detached, const Tensor& init, const Tensor& init_anchor,
                              const SlotMask& mask, const MetaSlotConfig& config);

/// Two-stage aggregation: detached slot attention from the learned queries,
/// nearest-prototype quantisation and duplicate pruning, masked refinement on
/// annealed noisy features, then a straight-through coupling to the queries
/// before the single gradient-carrying step. Noise is only injected when
/// `training`. The codebook is read, never written.
MetaSlotOutput metaslot_forward(const Tensor& features, const SlotAttentionParams& params,
                                const PrototypeCodebook& codebook, const MetaSlotConfig& config,
                                Rng& rng, bool training);

/// Bi-level learned-query slot attention over 2T steps with the straight-through
/// step before the last one.
MetaSlotOutput learned_query_forward(const Tensor& features, const SlotAttentionParams& params,
                                     const MetaSlotConfig& config, Rng& rng);

/// Plain slot attention from sampled initial slots, 2T recorded steps.
MetaSlotOutput slot_attention_forward(const Tensor& features, const SlotAttentionParams& params,
                                      const MetaSlotConfig& config, Rng& rng);

MetaSlotOutput aggregate(AggregatorKind kind, const Tensor& features,
                         const SlotAttentionParams& params, const PrototypeCodebook& codebook,
                         const MetaSlotConfig& config, Rng& rng, bool training);

/// Pooled k-means EMA update over a batch of detached outputs, then dead
/// prototype revival. Returns the number of revived prototypes.
std::size_t update_codebook(PrototypeCodebook& codebook, std::span<const MetaSlotOutput> batch,
                            std::int64_t step, const MetaSlotConfig& config);

}  // namespace metaslot
