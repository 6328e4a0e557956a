#pragma once

#include <iosfwd>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/backend.hpp"
#include "leakprobe/pii.hpp"

namespace leakprobe::analysis {

/// Union of canonical mentions over the completions of successful records.
/// All records must come from one backend role; the set's provenance follows
/// it. Runs one OpenMP task per record.
pii::PiiSet collect_extracted_pii(const std::vector<backend::GenerationRecord>& generations,
                                  const pii::Gazetteer& gazetteer, const pii::PatternSet& patterns);

/// Serial reference for collect_extracted_pii.
pii::PiiSet collect_extracted_pii_serial(const std::vector<backend::GenerationRecord>& generations,
                                         const pii::Gazetteer& gazetteer, const pii::PatternSet& patterns);

/// E_ft - E_base. Throws ProvenanceMismatch unless the arguments come from
/// fine-tuned and base generations respectively.
pii::PiiSet filter_novel(const pii::PiiSet& e_ft, const pii::PiiSet& e_base);

struct MatchResult {
  pii::PiiSet matched;
  pii::PiiSet unmatched_candidates;
  pii::PiiSet unrecovered_ground_truth;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  bool precision_degenerate = false;  // no candidates
  bool recall_degenerate = false;     // empty ground truth
  std::size_t candidate_count = 0;
  std::size_t ground_truth_count = 0;
  MatchResult match;
};

/// Exact (category, canonical) matching. Divisions by zero give 0 and set
/// the matching degenerate flag.
Metrics compute_metrics(const pii::PiiSet& candidates, const pii::PiiSet& ground_truth);

struct CategoryRow {
  pii::Category category = pii::Category::Person;
  std::size_t candidate_count = 0;
  std::size_t matched_count = 0;
  std::size_t ground_truth_count = 0;
  std::vector<std::string> examples;  // smallest matched canonical strings

  bool operator==(const CategoryRow&) const = default;
};

struct Totals {
  std::size_t candidate_count = 0;
  std::size_t matched_count = 0;
  std::size_t ground_truth_count = 0;

  bool operator==(const Totals&) const = default;
};

struct CategoryTable {
  std::vector<CategoryRow> rows;
  Totals totals;
};

inline constexpr std::size_t kDefaultExamples = 4;

/// One row per category present anywhere in the match, in category order.
CategoryTable breakdown_by_category(const MatchResult& match, std::size_t max_examples = kDefaultExamples);

struct LeakageReport {
  std::vector<CategoryRow> rows;
  Totals totals;
  double precision = 0.0;
  double recall = 0.0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  std::map<std::string, std::string> metadata;

  bool operator==(const LeakageReport&) const = default;
};

LeakageReport make_report(const Metrics& metrics, std::map<std::string, std::string> metadata = {},
                          std::size_t max_examples = kDefaultExamples);

enum class ReportFormat { TextTable, Csv, Json };

ReportFormat parse_report_format(std::string_view name);
std::string_view file_extension(ReportFormat format);

inline constexpr std::string_view kCsvHeader = "category,candidates,matched,ground_truth,precision,recall,examples";

void render_report(const LeakageReport& report, ReportFormat format, std::ostream& sink);
std::string render_report(const LeakageReport& report, ReportFormat format);

nlohmann::json to_json(const LeakageReport& report);
LeakageReport report_from_json(const nlohmann::json& j);
LeakageReport parse_report_json(std::string_view text);

}  // namespace leakprobe::analysis
