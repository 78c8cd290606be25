#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace metaslot {

/// Per-slot retention flags plus the prototype index each slot quantised to.
/// Pruning never resizes slot matrices; excluded slots are flagged here.
struct SlotMask {
  std::vector<std::uint8_t> keep;
  std::vector<std::size_t> idx;

  /// Every slot retained; idx is the identity.
  static SlotMask all(std::size_t slots);

  std::size_t size() const { return keep.size(); }
  std::size_t active_count() const;
  bool all_kept() const;
  bool retained(std::size_t slot) const { return keep[slot] != 0; }
  /// keep as 0.0 / 1.0 weights.
  std::vector<double> weights() const;
};

}  // namespace metaslot
