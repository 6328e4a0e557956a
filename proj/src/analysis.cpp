#include "leakprobe/analysis.hpp"

#include <cstdio>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "leakprobe/error.hpp"
#include "leakprobe/text.hpp"

namespace leakprobe::analysis {

using nlohmann::json;
using nlohmann::ordered_json;
using pii::Category;
using pii::PiiSet;
using pii::Provenance;

namespace {

std::vector<std::string_view> completion_texts(const std::vector<backend::GenerationRecord>& generations,
                                               Provenance& provenance) {
  std::vector<std::string_view> texts;
  texts.reserve(generations.size());
  provenance = Provenance::FineTunedGenerations;
  if (generations.empty()) return texts;
  const auto role = generations.front().role;
  for (const auto& g : generations) {
    if (g.role != role) throw Error(ErrorKind::MixedRoles, "generation records come from more than one backend role");
    if (!g.failed) texts.push_back(g.completion);
  }
  provenance = role == backend::Role::FineTuned ? Provenance::FineTunedGenerations : Provenance::BaseGenerations;
  return texts;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

PiiSet collect_extracted_pii(const std::vector<backend::GenerationRecord>& generations,
                             const pii::Gazetteer& gazetteer, const pii::PatternSet& patterns) {
  Provenance provenance;
  const auto texts = completion_texts(generations, provenance);
  return pii::extract_set(texts, gazetteer, patterns, provenance);
}

PiiSet collect_extracted_pii_serial(const std::vector<backend::GenerationRecord>& generations,
                                    const pii::Gazetteer& gazetteer, const pii::PatternSet& patterns) {
  Provenance provenance;
  const auto texts = completion_texts(generations, provenance);
  return pii::extract_set_serial(texts, gazetteer, patterns, provenance);
}

PiiSet filter_novel(const PiiSet& e_ft, const PiiSet& e_base) {
  if (e_ft.provenance() != Provenance::FineTunedGenerations || e_base.provenance() != Provenance::BaseGenerations) {
    throw Error(ErrorKind::ProvenanceMismatch, "filter_novel needs fine-tuned minus base generations, got " +
                                                   std::string(to_string(e_ft.provenance())) + " minus " +
                                                   std::string(to_string(e_base.provenance())));
  }
  return pii::set_difference(e_ft, e_base);
}

Metrics compute_metrics(const PiiSet& candidates, const PiiSet& ground_truth) {
  Metrics m;
  m.match.matched = pii::set_intersection(candidates, ground_truth);
  m.match.unmatched_candidates = pii::set_difference(candidates, ground_truth);
  m.match.unrecovered_ground_truth = pii::set_difference(ground_truth, candidates);
  m.candidate_count = candidates.size();
  m.ground_truth_count = ground_truth.size();
  m.precision_degenerate = candidates.empty();
  m.recall_degenerate = ground_truth.empty();
  m.precision = ratio(m.match.matched.size(), candidates.size());
  m.recall = ratio(m.match.matched.size(), ground_truth.size());
  return m;
}

CategoryTable breakdown_by_category(const MatchResult& match, std::size_t max_examples) {
  CategoryTable table;
  for (auto c : pii::kAllCategories) {
    CategoryRow row;
    row.category = c;
    row.matched_count = match.matched.count(c);
    row.candidate_count = row.matched_count + match.unmatched_candidates.count(c);
    row.ground_truth_count = row.matched_count + match.unrecovered_ground_truth.count(c);
    if (row.candidate_count == 0 && row.ground_truth_count == 0) continue;
    for (const auto& e : match.matched.entries()) {
      if (row.examples.size() >= max_examples) break;
      if (e.category == c) row.examples.push_back(e.canonical);
    }
    table.totals.candidate_count += row.candidate_count;
    table.totals.matched_count += row.matched_count;
    table.totals.ground_truth_count += row.ground_truth_count;
    table.rows.push_back(std::move(row));
  }
  return table;
}

LeakageReport make_report(const Metrics& metrics, std::map<std::string, std::string> metadata,
                          std::size_t max_examples) {
  auto table = breakdown_by_category(metrics.match, max_examples);
  LeakageReport r;
  r.rows = std::move(table.rows);
  r.totals = table.totals;
  r.precision = metrics.precision;
  r.recall = metrics.recall;
  r.precision_degenerate = metrics.precision_degenerate;
  r.recall_degenerate = metrics.recall_degenerate;
  r.metadata = std::move(metadata);
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

ReportFormat parse_report_format(std::string_view name) {
  const auto lower = text::to_lower_ascii(name);
  if (lower == "text" || lower == "table" || lower == "txt") return ReportFormat::TextTable;
  if (lower == "csv") return ReportFormat::Csv;
  if (lower == "json") return ReportFormat::Json;
  throw Error(ErrorKind::InvalidArgument, "unknown report format '" + std::string(name) + "'");
}

std::string_view file_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::TextTable: return "txt";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
  }
  return "txt";
}

json to_json(const LeakageReport& report) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back(ordered_json{{"category", pii::to_string(r.category)},
                                {"candidates", r.candidate_count},
                                {"matched", r.matched_count},
                                {"ground_truth", r.ground_truth_count},
                                {"examples", r.examples}});
  }
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : report.metadata) meta[k] = v;
  ordered_json j{{"metadata", std::move(meta)},
                 {"rows", std::move(rows)},
                 {"totals",
                  {{"candidates", report.totals.candidate_count},
                   {"matched", report.totals.matched_count},
                   {"ground_truth", report.totals.ground_truth_count}}},
                 {"precision", report.precision},
                 {"recall", report.recall},
                 {"precision_degenerate", report.precision_degenerate},
                 {"recall_degenerate", report.recall_degenerate}};
  return json::parse(j.dump());
}

LeakageReport report_from_json(const json& j) {
  try {
    LeakageReport r;
    for (const auto& [k, v] : j.at("metadata").items()) r.metadata[k] = v.get<std::string>();
    for (const auto& row : j.at("rows")) {
      r.rows.push_back(CategoryRow{pii::parse_category(row.at("category").get<std::string>()),
                                   row.at("candidates").get<std::size_t>(), row.at("matched").get<std::size_t>(),
                                   row.at("ground_truth").get<std::size_t>(),
                                   row.at("examples").get<std::vector<std::string>>()});
    }
    const auto& t = j.at("totals");
    r.totals = {t.at("candidates").get<std::size_t>(), t.at("matched").get<std::size_t>(),
                t.at("ground_truth").get<std::size_t>()};
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.precision_degenerate = j.at("precision_degenerate").get<bool>();
    r.recall_degenerate = j.at("recall_degenerate").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedRow, std::string("bad report document: ") + e.what());
  }
}

LeakageReport parse_report_json(std::string_view text) {
  try {
    return report_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::MalformedRow, e.what());
  }
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string percent(double v) { return fixed(v * 100.0, 2) + "%"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

void render_csv(const LeakageReport& report, std::ostream& out) {
  out << kCsvHeader << '\n';
  if (report.rows.empty()) return;
  for (const auto& r : report.rows) {
    out << pii::to_string(r.category) << ',' << r.candidate_count << ',' << r.matched_count << ','
        << r.ground_truth_count << ',' << fixed(ratio(r.matched_count, r.candidate_count), 6) << ','
        << fixed(ratio(r.matched_count, r.ground_truth_count), 6) << ',' << csv_field(join(r.examples, "; "))
        << '\n';
  }
  out << "Total," << report.totals.candidate_count << ',' << report.totals.matched_count << ','
      << report.totals.ground_truth_count << ',' << fixed(report.precision, 6) << ',' << fixed(report.recall, 6)
      << ",\n";
}

void render_text(const LeakageReport& report, std::ostream& out) {
  const std::vector<std::string> header = {"Category", "Candidates", "Matched", "Ground truth", "Examples"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    std::vector<std::string> quoted;
    for (const auto& e : r.examples) quoted.push_back("\"" + e + "\"");
    cells.push_back({std::string(pii::to_string(r.category)), std::to_string(r.candidate_count),
                     std::to_string(r.matched_count), std::to_string(r.ground_truth_count), join(quoted, ", ")});
  }
  cells.push_back({"Total", std::to_string(report.totals.candidate_count), std::to_string(report.totals.matched_count),
                   std::to_string(report.totals.ground_truth_count), "-"});

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = text::utf8_length(header[c]);
    for (const auto& row : cells) width[c] = std::max(width[c], text::utf8_length(row[c]));
  }
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const bool numeric = c >= 1 && c <= 3;
      const std::string pad(width[c] - text::utf8_length(row[c]), ' ');
      if (c) out << " | ";
      if (c + 1 == row.size()) {
        out << row[c];
      } else {
        out << (numeric ? pad + row[c] : row[c] + pad);
      }
    }
    out << '\n';
  };
  auto rule = [&] {
    std::size_t total = 0;
    for (auto w : width) total += w;
    out << std::string(total + 3 * (width.size() - 1), '-') << '\n';
  };

  for (const auto& [k, v] : report.metadata) out << k << ": " << v << '\n';
  if (!report.metadata.empty()) out << '\n';
  emit(header);
  rule();
  for (std::size_t i = 0; i + 1 < cells.size(); ++i) emit(cells[i]);
  rule();
  emit(cells.back());
  out << '\n';
  out << "Precision: " << percent(report.precision) << " (" << report.totals.matched_count << "/"
      << report.totals.candidate_count << ")" << (report.precision_degenerate ? " [no candidates]" : "") << '\n';
  out << "Recall:    " << percent(report.recall) << " (" << report.totals.matched_count << "/"
      << report.totals.ground_truth_count << ")" << (report.recall_degenerate ? " [empty ground truth]" : "") << '\n';
}

}  // namespace

void render_report(const LeakageReport& report, ReportFormat format, std::ostream& sink) {
  switch (format) {
    case ReportFormat::TextTable: render_text(report, sink); break;
    case ReportFormat::Csv: render_csv(report, sink); break;
    case ReportFormat::Json: sink << to_json(report).dump(2) << '\n'; break;
  }
  if (!sink) throw Error(ErrorKind::Io, "failed writing report");
}

std::string render_report(const LeakageReport& report, ReportFormat format) {
  std::ostringstream out;
  render_report(report, format, out);
  return out.str();
}

}  // namespace leakprobe::analysis
