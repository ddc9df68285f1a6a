#ifndef ZOZOOM_REPORT_HPP
#define ZOZOOM_REPORT_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zozoom/attack.hpp"

namespace zozoom {

inline constexpr int kSummaryVersion = 1;

/// Identifies which run produced a summary.
struct RunLabel {
  std::string method;
  double lambda_ini = 0.0;
  std::uint64_t query_budget = 0;
  double distortion_threshold = 0.0;
};

/// Per-attack summary ("TRC1" version 1). The best image is not embedded.
nlohmann::json summary_to_json(const AttackTrace &trace, const RunLabel &label);

/// Parsed summary: label plus a trace carrying only the summary fields.
struct LoadedSummary {
  RunLabel label;
  AttackTrace trace;
};

LoadedSummary summary_from_json(const nlohmann::json &j);

/// Reads a per-attack summary, a batch summary ({"attacks": [...]}) or a
/// directory containing summary.json / batch_summary.json.
std::vector<LoadedSummary> load_summaries(const std::filesystem::path &path);

struct ReportRow {
  std::string method;
  double lambda_ini = 0.0;
  BatchSummary summary;
  std::optional<double> reduction_ratio; // fraction, not percent
};

/// Groups summaries by (method, lambda_ini) in first-seen order. The
/// baseline is the coordinate-wise ("zoo" prefix) group with the smallest
/// lambda_ini, or the first group when there is none.
std::vector<ReportRow> build_report(const std::vector<LoadedSummary> &summaries);

/// CSV header: method,lambda_ini,ASR,mean_queries_initial,
/// query_reduction_ratio,mean_perpixel_dist_initial,TPR,
/// mean_queries_to_threshold. Rates are percentages; absent values are empty.
std::string report_csv(const std::vector<ReportRow> &rows);

nlohmann::json batch_summary_to_json(const std::vector<AttackTrace> &traces,
                                     const RunLabel &label);

} // namespace zozoom

#endif // ZOZOOM_REPORT_HPP
