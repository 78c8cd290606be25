#include "metaslot/compare.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace metaslot {

namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

template <typename Get>
Summary summarize(const ComparisonRow& row, Get get) {
  if (row.reports.empty()) throw std::invalid_argument("over_seeds: no runs for " + row.name);
  const auto n = static_cast<double>(row.reports.size());
  Summary s;
  for (const auto& r : row.reports) s.mean += get(r);
  s.mean /= n;
  for (const auto& r : row.reports) s.std += (get(r) - s.mean) * (get(r) - s.mean);
  s.std = std::sqrt(s.std / n);
  return s;
}

}  // namespace

Summary over_seeds(const ComparisonRow& row, double MetricsReport::*field) {
  return summarize(row, [&](const MetricsReport& r) { return r.*field; });
}

Summary over_seeds(const ComparisonRow& row, Summary MetricsReport::*field) {
  return summarize(row, [&](const MetricsReport& r) { return (r.*field).mean; });
}

std::string comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  const auto cell = [](Summary s) { return fmt(s.mean) + " ± " + fmt(s.std); };
  os << "| config | FG-ARI | mBO | mIoU | ARI | active | abs(K - M) |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    os << "| " << row.name << " | " << cell(over_seeds(row, &MetricsReport::fg_ari)) << " | "
       << cell(over_seeds(row, &MetricsReport::mbo)) << " | " << cell(over_seeds(row, &MetricsReport::miou))
       << " | " << cell(over_seeds(row, &MetricsReport::ari)) << " | "
       << fmt(over_seeds(row, &MetricsReport::mean_active_count).mean, 2) << " | "
       << cell(over_seeds(row, &MetricsReport::mean_count_error)) << " |\n";
  }
  return os.str();
}

}  // namespace metaslot
