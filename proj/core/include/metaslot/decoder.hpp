#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "metaslot/nn.hpp"
#include "metaslot/slot_mask.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

/// Broadcast MLP decoder: every slot is added to a learned per-position
/// embedding and mapped to a feature reconstruction plus one alpha logit.
struct DecoderParams {
  Tensor positional;  // [N x D]
  MlpParams mlp;      // D -> hidden -> D + 1

  /// Positional rows are drawn from N(0, positional_std^2).
  static DecoderParams create(std::size_t positions, std::size_t dim, std::size_t hidden, Rng& rng,
                              double positional_std = 0.02);
  std::size_t positions() const { return positional.rows(); }
  std::size_t dim() const { return positional.cols(); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct DecodedScene {
  Tensor reconstruction;  // [N x D], differentiable
  Tensor alpha;           // [N x K] mixing weights, masked columns 0 (constant copy)
  std::vector<std::int32_t> pred_labels;  // winning slot index + 1 per position
};

/// Mixture decoding over retained slots only; throws when every slot is masked.
DecodedScene decode(const Tensor& slots, const SlotMask& mask, const DecoderParams& params);

/// Mean squared error over all N*D entries.
Tensor reconstruction_loss(const DecodedScene& decoded, const Tensor& features);

/// Per-position argmax over retained alpha columns; ties go to the lower slot.
/// Labels are slot index + 1, so 0 never appears in a prediction.
std::vector<std::int32_t> predicted_masks(const Tensor& alpha, const SlotMask& mask);

}  // namespace metaslot
