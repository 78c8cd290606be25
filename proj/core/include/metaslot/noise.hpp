#pragma once

#include <cstddef>

#include "metaslot/random.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

/// Linearly annealed feature-noise amplitude over `iterations` refinement
/// steps: alpha_t = sigma * (1 - t / (T - 1)), reaching exactly 0 at t = T - 1.
/// A single-step schedule is noiseless.
struct NoiseSchedule {
  double sigma = 0.0;
  std::size_t iterations = 1;
};

double noise_sigma(std::size_t t, const NoiseSchedule& schedule);

/// Z + xi with xi ~ N(0, alpha^2) per entry, resampled on every call. The
/// noise is a constant on the tape, so gradients w.r.t. Z pass through
/// unchanged. alpha == 0 returns Z itself and draws nothing.
Tensor inject_noise(const Tensor& features, double alpha, Rng& rng);

}  // namespace metaslot
