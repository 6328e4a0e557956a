#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "leakprobe/analysis.hpp"
#include "leakprobe/attack.hpp"
#include "leakprobe/config.hpp"
#include "leakprobe/corpus.hpp"

// Stage wiring shared by the CLI subcommands. Stages communicate through
// files under one output directory:
//
//   prepared/{kept,rejected,train,ood}.jsonl
//   finetune/examples_<task>.jsonl, finetune/finetune_<task>.jsonl
//   ground_truth.json
//   <section>/attack/...            section: classification | autocomplete/{train,ood}
//   <section>/pii_*.json, <section>/analysis.json, <section>/report.{txt,csv,json}
//   run_manifest.json
namespace leakprobe::pipeline {

namespace fs = std::filesystem;

struct Prepared {
  std::vector<corpus::EmailRecord> all;
  corpus::FilterResult filtered;
  corpus::CorpusSplit split;
};

Prepared prepare(const config::RunConfig& cfg);

std::vector<corpus::EmailRecord> load_corpus(const fs::path& path,
                                             std::optional<corpus::InputFormat> format = std::nullopt);
std::vector<corpus::EmailRecord> load_records(const fs::path& path);
std::vector<backend::GenerationRecord> load_generations(const fs::path& path);

std::unique_ptr<backend::CompletionBackend> make_configured_backend(
    const config::RunConfig& cfg, const config::BackendConfig& b, backend::Role role,
    const std::vector<corpus::EmailRecord>& train);

/// Candidates (minus `base` when given) scored against the ground truth.
analysis::LeakageReport score(const pii::PiiSet& candidates, const pii::PiiSet* base, const pii::PiiSet& ground_truth,
                              std::map<std::string, std::string> metadata, std::size_t max_examples);

void write_reports(const analysis::LeakageReport& report, const fs::path& dir,
                   const std::vector<analysis::ReportFormat>& formats);

void write_text(const fs::path& path, std::string_view contents);
void write_json(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json(const fs::path& path);

const std::vector<analysis::ReportFormat>& all_formats();

struct SectionStatus {
  std::string name;
  attack::RunStatus status;
};

// Stages. Each reads what earlier stages wrote under `out`.
Prepared stage_prepare(const config::RunConfig& cfg, const fs::path& out);
std::vector<corpus::FinetuneExample> stage_build(const config::RunConfig& cfg, const fs::path& out);
std::size_t stage_export(corpus::Task task, const fs::path& out);
std::vector<SectionStatus> stage_attack(const config::RunConfig& cfg, const fs::path& out,
                                        std::optional<std::size_t> request_limit = std::nullopt);
/// Sections with a finished attack, in a fixed order.
std::vector<std::string> finished_sections(const config::RunConfig& cfg, const fs::path& out);
void stage_extract(const config::RunConfig& cfg, const fs::path& out);
std::vector<analysis::LeakageReport> stage_analyze(const config::RunConfig& cfg, const fs::path& out);
void stage_report(const config::RunConfig& cfg, const fs::path& out, const std::vector<analysis::ReportFormat>& formats);

struct AuditResult {
  std::vector<SectionStatus> sections;
  std::vector<analysis::LeakageReport> reports;  // empty while any attack is unfinished
  bool complete() const;
};

/// All stages in order. Re-running with the same `out` continues unfinished
/// attacks; `request_limit` bounds new requests per attack.
AuditResult run_audit(const config::RunConfig& cfg, const fs::path& out,
                      std::optional<std::size_t> request_limit = std::nullopt);

}  // namespace leakprobe::pipeline
