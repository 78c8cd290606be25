#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "metaslot/adam.hpp"
#include "metaslot/codebook.hpp"
#include "metaslot/config.hpp"
#include "metaslot/decoder.hpp"
#include "metaslot/slot_attention.hpp"

namespace metaslot {

/// Aggregator weights, decoder weights and the prototype codebook.
struct Model {
  SlotAttentionParams slot_attention;
  DecoderParams decoder;
  PrototypeCodebook codebook;

  static Model create(const TrainConfig& config);
  /// Trainable tensors in a fixed order; names are stable across builds.
  ParamList params() const;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  TrainConfig config;
  Model model;
  AdamState optimizer;
  std::int64_t step = 0;
};

/// Little-endian binary record: magic, version, config hash and text, step,
/// named parameter tensors, Adam moments, codebook vectors and last-used steps.
void save_checkpoint(std::ostream& os, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace metaslot
