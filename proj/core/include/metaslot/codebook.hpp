#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "metaslot/random.hpp"
#include "metaslot/slot_mask.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

struct CodebookConfig {
  std::size_t size = 32;  // K_p
  double ema_rate = 0.01;
  std::int64_t timeout = 1024;
  double init_scale = 1.0;
};

/// Global prototype set. Prototypes are plain data and never enter a tape.
class PrototypeCodebook {
 public:
  PrototypeCodebook() = default;
  PrototypeCodebook(std::size_t dim, std::vector<double> vectors, double ema_rate,
                    std::int64_t timeout);

  std::size_t size() const { return last_used_.size(); }
  std::size_t dim() const { return dim_; }
  double ema_rate() const { return ema_rate_; }
  std::int64_t timeout() const { return timeout_; }

  std::span<const double> vector(std::size_t k) const {
    return {vectors_.data() + k * dim_, dim_};
  }
  std::span<double> vector(std::size_t k) { return {vectors_.data() + k * dim_, dim_}; }
  const std::vector<double>& vectors() const { return vectors_; }
  std::vector<double>& vectors() { return vectors_; }

  std::int64_t last_used(std::size_t k) const { return last_used_[k]; }
  const std::vector<std::int64_t>& last_used() const { return last_used_; }
  void set_last_used(std::size_t k, std::int64_t step) { last_used_[k] = step; }
  void set_last_used(std::vector<std::int64_t> steps);

  /// Prototype nearest to `v` in Euclidean distance; ties go to the lower index.
  std::size_t nearest(std::span<const double> v) const;
  /// Past the timeout window at `step`.
  bool is_dead(std::size_t k, std::int64_t step) const { return step - last_used_[k] > timeout_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> vectors_;
  std::vector<std::int64_t> last_used_;
  double ema_rate_ = 0.01;
  std::int64_t timeout_ = 1024;
};

/// Prototypes drawn i.i.d. from N(0, scale^2); last-used steps all zero.
PrototypeCodebook init_codebook(Rng& rng, std::size_t prototypes, std::size_t dim,
                                const CodebookConfig& config);

struct Quantized {
  Tensor slots;                  // [K x D] copies of the chosen prototypes, no grad
  std::vector<std::size_t> idx;  // nearest prototype per slot
};

Quantized quantize(const Tensor& slots, const PrototypeCodebook& codebook);

/// Keeps the first slot that claims each prototype index and masks the rest.
SlotMask prune_duplicates(std::span<const std::size_t> idx);

enum class EmaAssignment {
  kRequantize,  // re-assign final slots to their nearest prototype
  kStageOne,    // reuse the stage-one prototype indices
};

/// Final slots of one scene, detached, with the scene's mask.
struct CodebookSample {
  Tensor slots;
  SlotMask mask;
};

/// One mini-batch k-means step followed by the EMA move
/// e_k <- (1 - eta) e_k + eta c_k for every prototype with assigned slots.
/// Returns how many prototypes moved.
std::size_t ema_update(PrototypeCodebook& codebook, std::span<const CodebookSample> batch,
                       std::int64_t step, EmaAssignment mode = EmaAssignment::kRequantize);

/// Replaces every prototype idle for longer than the timeout by the retained
/// batch slot with the largest minimum cosine distance to the active
/// prototypes. Revived prototypes become active immediately.
std::size_t revive_dead(PrototypeCodebook& codebook, std::span<const CodebookSample> batch,
                        std::int64_t step);

double cosine_distance(std::span<const double> a, std::span<const double> b);

}  // namespace metaslot
