#pragma once

#include <cstddef>
#include <optional>

#include "metaslot/nn.hpp"
#include "metaslot/noise.hpp"
#include "metaslot/random.hpp"
#include "metaslot/slot_mask.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

struct SlotAttentionConfig {
  std::size_t dim = 8;
  std::size_t max_slots = 6;
  std::size_t mlp_hidden = 32;
  /// GRU output + MLP(LN(GRU output)); false gives the literal MLP(GRU(.)).
  bool residual_mlp = true;
  /// One Gaussian shared by every slot instead of per-slot (mu_i, sigma_i).
  bool shared_init = false;
  /// Added to the per-slot attention mass before normalising over features.
  double attention_eps = 1e-8;
};

/// Weights shared by every aggregation step, in both MetaSlot stages.
struct SlotAttentionParams {
  SlotAttentionConfig config;
  LinearParams query, key, value;
  GruParams gru;
  MlpParams mlp;
  LayerNormParams norm_inputs, norm_slots, norm_mlp;
  Tensor init_mu;         // [max_slots x D], or [1 x D] with shared_init
  Tensor init_log_sigma;  // same shape as init_mu

  static SlotAttentionParams create(const SlotAttentionConfig& config, Rng& rng);
  void collect(const std::string& prefix, ParamList& out) const;
};

struct SlotState {
  Tensor slots;  // [K x D]
  std::size_t iteration = 0;
};

/// Keys and values of one (possibly noised) feature map.
struct FeatureProjection {
  Tensor keys;    // [N x D]
  Tensor values;  // [N x D]
};

struct AttentionResult {
  Tensor increments;  // [K x D]; zero rows for masked slots
  Tensor attention;   // [N x K]; softmax over retained slots, masked columns 0
};

/// mu rows when deterministic, otherwise mu + sigma * eps with eps ~ N(0, I).
SlotState init_slots(const SlotAttentionParams& params, std::size_t slots, Rng& rng,
                     bool deterministic);

FeatureProjection project_features(const Tensor& features, const SlotAttentionParams& params);

AttentionResult attention_step(const SlotState& state, const FeatureProjection& projection,
                               const SlotAttentionParams& params, const SlotMask& mask);
AttentionResult attention_step(const SlotState& state, const Tensor& features,
                               const SlotAttentionParams& params, const SlotMask& mask);

/// GRU then MLP on retained rows; masked rows pass through bit-for-bit.
SlotState slot_update(const SlotState& state, const Tensor& increments,
                      const SlotAttentionParams& params, const SlotMask& mask);

struct IterationResult {
  SlotState state;
  Tensor attention;  // from the last step
};

struct IterationOptions {
  std::size_t iterations = 3;
  std::optional<NoiseSchedule> noise;
  /// Run every step but the last without recording, so only the final step
  /// carries gradient.
  bool detach_until_last = false;
};

IterationResult run_iterations(const Tensor& features, const SlotState& initial,
                               const SlotAttentionParams& params, const SlotMask& mask,
                               const IterationOptions& options, Rng& rng);

}  // namespace metaslot
