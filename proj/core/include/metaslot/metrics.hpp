#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace metaslot {

using LabelSpan = std::span<const std::int32_t>;

/// Adjusted Rand Index between two partitions of the same positions. With
/// `foreground_only`, positions whose ground-truth label is 0 are dropped.
/// Identical degenerate partitions (a single cluster, or all singletons, on
/// both sides) score 1.
double adjusted_rand_index(LabelSpan pred, LabelSpan gt, bool foreground_only = false);

/// Mean over ground-truth instances (label != 0) of the best IoU with any
/// predicted mask; a predicted mask may serve several instances.
double mean_best_overlap(LabelSpan pred, LabelSpan gt);

/// Mean over ground-truth instances of the IoU under the one-to-one matching
/// that maximises total IoU. Unmatched instances contribute 0.
double mean_iou(LabelSpan pred, LabelSpan gt);

/// Minimum-cost assignment of rows to columns for a dense rectangular matrix.
/// Returns the column for each row, or -1 when rows outnumber columns and the
/// row stays unassigned.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

struct SceneOutcome {
  std::vector<std::int32_t> pred;
  std::vector<std::int32_t> gt;
  std::size_t active_count = 0;
  std::size_t object_count = 0;
};

struct SceneMetrics {
  double ari = 0.0, fg_ari = 0.0, mbo = 0.0, miou = 0.0;
  std::size_t active_count = 0, object_count = 0;
};

struct Summary {
  double mean = 0.0, std = 0.0;
};

struct MetricsReport {
  std::vector<SceneMetrics> scenes;
  Summary ari, fg_ari, mbo, miou;
  double mean_active_count = 0.0;
  double mean_count_error = 0.0;  // mean |active_count - object_count|
};

SceneMetrics evaluate_scene(const SceneOutcome& outcome);
MetricsReport evaluate_split(std::span<const SceneOutcome> outcomes);

/// One JSON object per scene ("record": "scene") followed by one aggregate
/// record ("record": "aggregate").
void write_report(std::ostream& os, const MetricsReport& report);

}  // namespace metaslot
