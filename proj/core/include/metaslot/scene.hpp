#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "metaslot/random.hpp"
#include "metaslot/tensor.hpp"

namespace metaslot {

/// Per-pixel feature layout of synthetic scenes.
namespace scene_channel {
inline constexpr std::size_t kColor = 0;   // 3 channels
inline constexpr std::size_t kShape = 3;   // 2 channels
inline constexpr std::size_t kX = 5;
inline constexpr std::size_t kY = 6;
inline constexpr std::size_t kBackground = 7;
inline constexpr std::size_t kCount = 8;
}  // namespace scene_channel

enum class ShapeKind : std::uint8_t { kRectangle = 0, kDisk = 1, kTriangle = 2 };

inline constexpr std::size_t kMaxColors = 7;
inline constexpr std::size_t kMaxShapes = 3;

struct SceneSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t min_objects = 2;
  std::size_t max_objects = 5;
  std::size_t shape_vocab = 3;
  std::size_t color_vocab = 6;
  double jitter_std = 0.05;
};

struct SyntheticScene {
  std::size_t height = 0, width = 0;
  Tensor features;                  // [H*W x 8]
  std::vector<std::int32_t> labels;  // 0 background, 1..M instances
  std::size_t object_count = 0;
};

/// Places M ~ U[min, max] rectangles, disks and triangles front to back; later
/// objects occlude earlier ones and every object keeps at least one pixel.
/// Throws std::invalid_argument when the canvas cannot host the shapes.
SyntheticScene generate_scene(Rng& rng, const SceneSpec& spec);
SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

/// n scenes whose seeds derive from `root_seed` and the scene index.
std::vector<SyntheticScene> generate_split(std::uint64_t root_seed, const SceneSpec& spec,
                                           std::size_t n);

void validate(const SceneSpec& spec);

/// JSON record with height, width, object_count, labels and row-major features.
void write_scene(std::ostream& os, const SyntheticScene& scene);
SyntheticScene read_scene(std::istream& is);

}  // namespace metaslot
