#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "metaslot/metaslot.hpp"
#include "metaslot/scene.hpp"

namespace metaslot {

struct OptimizerConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class PositionalInit {
  kNoise,        // N(0, positional_std^2) everywhere
  kCoordinates,  // as kNoise, but the coordinate channels hold (-x, -y) of the position
};

struct TrainConfig {
  AggregatorKind aggregator = AggregatorKind::kMetaSlot;
  SceneSpec scene;

  std::size_t dim = 8;
  std::size_t mlp_hidden = 32;
  std::size_t decoder_hidden = 32;
  double positional_std = 0.02;
  PositionalInit positional_init = PositionalInit::kCoordinates;
  bool residual_mlp = true;
  MetaSlotConfig metaslot;

  OptimizerConfig optimizer;
  std::int64_t steps = 5000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 500;
  std::size_t eval_scenes = 200;
  std::uint64_t eval_seed = 7919;

  /// Rejects combinations that cannot run (e.g. more slots than prototypes).
  void validate() const;
};

/// Flat `key = value` text, one entry per line, '#' comments. Unknown keys and
/// malformed values throw std::invalid_argument naming the line.
TrainConfig parse_config(std::istream& is);
TrainConfig load_config(const std::filesystem::path& path);
/// Applies a single `key=value` override.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);

/// Every key with its current value, sorted by key; parse_config round-trips it.
std::string format_config(const TrainConfig& config);
std::vector<std::string> config_keys();

/// FNV-1a over format_config().
std::uint64_t config_hash(const TrainConfig& config);

}  // namespace metaslot
