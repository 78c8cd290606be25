#include "metaslot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace metaslot {

namespace {

double pairs(double n) { return n * (n - 1.0) / 2.0; }

void check_lengths(const char* op, LabelSpan pred, LabelSpan gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument(std::string(op) + ": label maps differ in length");
  }
}

// Instance masks as sorted position lists keyed by label.
std::map<std::int32_t, std::vector<std::size_t>> masks_of(LabelSpan labels, bool skip_zero) {
  std::map<std::int32_t, std::vector<std::size_t>> masks;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (skip_zero && labels[i] == 0) continue;
    masks[labels[i]].push_back(i);
  }
  return masks;
}

// IoU matrix [gt instance x predicted mask].
std::vector<std::vector<double>> iou_matrix(LabelSpan pred, LabelSpan gt) {
  const auto gt_masks = masks_of(gt, true);
  if (gt_masks.empty()) throw std::invalid_argument("overlap metrics: no foreground instance");
  std::map<std::int32_t, std::size_t> pred_index;
  std::vector<double> pred_area;
  for (auto l : pred) {
    if (pred_index.emplace(l, pred_area.size()).second) pred_area.push_back(0.0);
    pred_area[pred_index[l]] += 1.0;
  }
  std::vector<std::vector<double>> iou;
  for (const auto& [label, positions] : gt_masks) {
    std::vector<double> inter(pred_area.size(), 0.0);
    for (auto p : positions) inter[pred_index[pred[p]]] += 1.0;
    std::vector<double> row(pred_area.size());
    const double area = static_cast<double>(positions.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = inter[j] / (area + pred_area[j] - inter[j]);
    }
    iou.push_back(std::move(row));
  }
  return iou;
}

Summary summarize(const std::vector<SceneMetrics>& scenes, double SceneMetrics::*field) {
  Summary s;
  for (const auto& m : scenes) s.mean += m.*field;
  s.mean /= static_cast<double>(scenes.size());
  double var = 0.0;
  for (const auto& m : scenes) var += (m.*field - s.mean) * (m.*field - s.mean);
  s.std = std::sqrt(var / static_cast<double>(scenes.size()));
  return s;
}

}  // namespace

double adjusted_rand_index(LabelSpan pred, LabelSpan gt, bool foreground_only) {
  check_lengths("adjusted_rand_index", pred, gt);
  std::map<std::pair<std::int32_t, std::int32_t>, double> table;
  std::map<std::int32_t, double> rows, cols;
  double n = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (foreground_only && gt[i] == 0) continue;
    table[{pred[i], gt[i]}] += 1.0;
    rows[pred[i]] += 1.0;
    cols[gt[i]] += 1.0;
    n += 1.0;
  }
  if (n == 0.0) throw std::invalid_argument("adjusted_rand_index: no positions to compare");

  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, count] : table) index += pairs(count);
  for (const auto& [key, count] : rows) sum_rows += pairs(count);
  for (const auto& [key, count] : cols) sum_cols += pairs(count);
  const double total = pairs(n);
  const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  // Zero denominator only for identical single-cluster or all-singleton splits.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

double mean_best_overlap(LabelSpan pred, LabelSpan gt) {
  check_lengths("mean_best_overlap", pred, gt);
  const auto iou = iou_matrix(pred, gt);
  double total = 0.0;
  for (const auto& row : iou) total += *std::max_element(row.begin(), row.end());
  return total / static_cast<double>(iou.size());
}

double mean_iou(LabelSpan pred, LabelSpan gt) {
  check_lengths("mean_iou", pred, gt);
  const auto iou = iou_matrix(pred, gt);
  std::vector<std::vector<double>> cost = iou;
  for (auto& row : cost)
    for (auto& v : row) v = -v;
  const auto match = solve_assignment(cost);
  double total = 0.0;
  for (std::size_t g = 0; g < iou.size(); ++g) {
    if (match[g] >= 0) total += iou[g][static_cast<std::size_t>(match[g])];
  }
  return total / static_cast<double>(iou.size());
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size();
  if (rows == 0) return {};
  const std::size_t cols = cost[0].size();
  for (const auto& r : cost) {
    if (r.size() != cols) throw std::invalid_argument("solve_assignment: ragged cost matrix");
  }
  if (cols == 0) return std::vector<int>(rows, -1);
  if (rows > cols) {
    std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t[j][i] = cost[i][j];
    const auto col_to_row = solve_assignment(t);
    std::vector<int> out(rows, -1);
    for (std::size_t j = 0; j < cols; ++j) out[static_cast<std::size_t>(col_to_row[j])] = static_cast<int>(j);
    return out;
  }

  // Shortest augmenting paths with potentials; 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> owner(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<bool> used(cols + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(rows, -1);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (owner[j] != 0) out[owner[j] - 1] = static_cast<int>(j - 1);
  }
  return out;
}

SceneMetrics evaluate_scene(const SceneOutcome& outcome) {
  SceneMetrics m;
  m.ari = adjusted_rand_index(outcome.pred, outcome.gt, false);
  m.fg_ari = adjusted_rand_index(outcome.pred, outcome.gt, true);
  m.mbo = mean_best_overlap(outcome.pred, outcome.gt);
  m.miou = mean_iou(outcome.pred, outcome.gt);
  m.active_count = outcome.active_count;
  m.object_count = outcome.object_count;
  return m;
}

MetricsReport evaluate_split(std::span<const SceneOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("evaluate_split: empty split");
  MetricsReport report;
  for (const auto& o : outcomes) report.scenes.push_back(evaluate_scene(o));
  report.ari = summarize(report.scenes, &SceneMetrics::ari);
  report.fg_ari = summarize(report.scenes, &SceneMetrics::fg_ari);
  report.mbo = summarize(report.scenes, &SceneMetrics::mbo);
  report.miou = summarize(report.scenes, &SceneMetrics::miou);
  double active = 0.0, error = 0.0;
  for (const auto& m : report.scenes) {
    active += static_cast<double>(m.active_count);
    error += std::abs(static_cast<double>(m.active_count) - static_cast<double>(m.object_count));
  }
  report.mean_active_count = active / static_cast<double>(report.scenes.size());
  report.mean_count_error = error / static_cast<double>(report.scenes.size());
  return report;
}

void write_report(std::ostream& os, const MetricsReport& report) {
  for (std::size_t i = 0; i < report.scenes.size(); ++i) {
    const auto& m = report.scenes[i];
    nlohmann::json j{{"record", "scene"},     {"index", i},          {"ari", m.ari},
                     {"fg_ari", m.fg_ari},    {"mbo", m.mbo},        {"miou", m.miou},
                     {"active_count", m.active_count}, {"object_count", m.object_count}};
    os << j.dump() << '\n';
  }
  nlohmann::json agg{{"record", "aggregate"},
                     {"scenes", report.scenes.size()},
                     {"ari_mean", report.ari.mean},
                     {"ari_std", report.ari.std},
                     {"fg_ari_mean", report.fg_ari.mean},
                     {"fg_ari_std", report.fg_ari.std},
                     {"mbo_mean", report.mbo.mean},
                     {"mbo_std", report.mbo.std},
                     {"miou_mean", report.miou.mean},
                     {"miou_std", report.miou.std},
                     {"active_count_mean", report.mean_active_count},
                     {"count_error_mean", report.mean_count_error}};
  os << agg.dump() << '\n';
}

}  // namespace metaslot
