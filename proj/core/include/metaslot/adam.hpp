#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metaslot/config.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> first;   // per parameter
  std::vector<std::vector<double>> second;  // per parameter

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(std::span<const Tensor> params);
};

/// Bias-corrected Adam. grads[i] pairs with params[i]; moments update in place.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state, const OptimizerConfig& hyper);

}  // namespace metaslot
