#pragma once

#include <string>
#include <vector>

#include "metaslot/metrics.hpp"

namespace metaslot {

/// Final reports of one configuration, one per seed.
struct ComparisonRow {
  std::string name;
  std::vector<MetricsReport> reports;
  double cpu_seconds = 0.0;
};

/// Mean and population std over seeds of a per-run scalar.
Summary over_seeds(const ComparisonRow& row, double MetricsReport::*field);
/// Same, taking each run's split mean.
Summary over_seeds(const ComparisonRow& row, Summary MetricsReport::*field);

/// Markdown table: FG-ARI, mBO, mIoU, ARI, mean active count and |K - M|.
std::string comparison_table(const std::vector<ComparisonRow>& rows);

}  // namespace metaslot
