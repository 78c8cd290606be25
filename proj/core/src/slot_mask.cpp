#include "metaslot/slot_mask.hpp"

#include <algorithm>
#include <numeric>

namespace metaslot {

SlotMask SlotMask::all(std::size_t slots) {
  SlotMask m;
  m.keep.assign(slots, 1);
  m.idx.resize(slots);
  std::iota(m.idx.begin(), m.idx.end(), std::size_t{0});
  return m;
}

std::size_t SlotMask::active_count() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

bool SlotMask::all_kept() const { return active_count() == keep.size(); }

std::vector<double> SlotMask::weights() const { return {keep.begin(), keep.end()}; }

}  // namespace metaslot
