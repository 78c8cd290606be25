#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "metaslot/config.hpp"
#include "metaslot/model.hpp"
#include "metaslot/scene.hpp"

namespace metaslot {

struct LabelMap {
  std::size_t height = 0, width = 0;
  std::vector<std::int32_t> labels;  // row-major
};

/// Plain (P2) graymap, one integer label per pixel. maxval is at least 1.
void write_pgm(const std::filesystem::path& path, const LabelMap& map);
LabelMap read_pgm(const std::filesystem::path& path);

struct MaskSidecar {
  std::size_t scene = 0;
  std::size_t height = 0, width = 0;
  std::size_t active_count = 0, object_count = 0;
  std::vector<int> smask;
  std::vector<std::size_t> idx;  // empty for aggregators without a codebook
};

void write_sidecar(const std::filesystem::path& path, const MaskSidecar& sidecar);
MaskSidecar read_sidecar(const std::filesystem::path& path);

struct ExportedScene {
  std::filesystem::path gt, pred, sidecar;
};

/// For each scene writes scene_NNNN_gt.pgm, scene_NNNN_pred.pgm and
/// scene_NNNN.json under `dir` (created if missing). Predictions come from the
/// same deterministic evaluation pass as `evaluate`.
std::vector<ExportedScene> export_masks(const TrainConfig& config, const Model& model,
                                        std::span<const SyntheticScene> scenes,
                                        const std::filesystem::path& dir);

}  // namespace metaslot
