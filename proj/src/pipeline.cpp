#include "leakprobe/pipeline.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "leakprobe/error.hpp"

namespace leakprobe::pipeline {

using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string() + " (run the earlier stage first)");
  return in;
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream out;
  fn(out);
  write_text(path, out.str());
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

fs::path prepared_dir(const fs::path& out) { return out / "prepared"; }
fs::path finetune_dir(const fs::path& out) { return out / "finetune"; }

std::string task_name(corpus::Task task) { return std::string(corpus::to_string(task)); }

std::vector<std::string> subjects_of(const std::vector<corpus::EmailRecord>& records) {
  std::vector<std::string> subjects;
  for (const auto& r : records) {
    if (!r.subject.empty()) subjects.push_back(r.subject);
  }
  return subjects;
}

std::size_t count_failed(const std::vector<backend::GenerationRecord>& records) {
  std::size_t n = 0;
  for (const auto& r : records) n += r.failed ? 1 : 0;
  return n;
}

bool uses_base(const config::RunConfig& cfg) {
  return cfg.task == corpus::Task::Classification || cfg.autocomplete_base_subtraction;
}

// Sections planned for the configured task, with their prompt subjects.
std::vector<std::pair<std::string, std::vector<std::string>>> planned_sections(const config::RunConfig& cfg,
                                                                               const fs::path& out) {
  if (cfg.task == corpus::Task::Classification) return {{"classification", {}}};
  std::vector<std::pair<std::string, std::vector<std::string>>> sections;
  auto train = subjects_of(load_records(prepared_dir(out) / "train.jsonl"));
  auto ood = subjects_of(load_records(prepared_dir(out) / "ood.jsonl"));
  if (!train.empty()) sections.emplace_back("autocomplete/train", std::move(train));
  if (!ood.empty()) sections.emplace_back("autocomplete/ood", std::move(ood));
  return sections;
}

fs::path base_attack_dir(const config::RunConfig& cfg, const fs::path& section_dir) {
  // The naive attack keeps both roles in one checkpoint.
  return cfg.task == corpus::Task::Classification ? section_dir / "attack" : section_dir / "base_attack";
}

}  // namespace

void write_text(const fs::path& path, std::string_view contents) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  attack::write_file_atomic(path, contents);
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::MalformedRow, path.string() + ": " + e.what());
  }
}

const std::vector<analysis::ReportFormat>& all_formats() {
  static const std::vector<analysis::ReportFormat> formats = {
      analysis::ReportFormat::TextTable, analysis::ReportFormat::Csv, analysis::ReportFormat::Json};
  return formats;
}

std::vector<corpus::EmailRecord> load_corpus(const fs::path& path, std::optional<corpus::InputFormat> format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read corpus " + path.string());
  return corpus::parse_email_corpus(in, format ? *format : config::format_for_path(path));
}

std::vector<corpus::EmailRecord> load_records(const fs::path& path) {
  auto in = open_in(path);
  return corpus::read_records_jsonl(in);
}

std::vector<backend::GenerationRecord> load_generations(const fs::path& path) {
  auto in = open_in(path);
  return backend::read_generations_jsonl(in);
}

Prepared prepare(const config::RunConfig& cfg) {
  Prepared p;
  p.all = load_corpus(cfg.resolve(cfg.corpus_path), cfg.corpus_format);
  p.filtered = corpus::apply_filter_policy(p.all, cfg.filter_policy());
  const std::size_t train_count = cfg.train_count ? *cfg.train_count : p.filtered.kept.size();
  p.split = corpus::split_train_ood(p.filtered.kept, train_count, cfg.seed);
  return p;
}

std::unique_ptr<backend::CompletionBackend> make_configured_backend(const config::RunConfig& cfg,
                                                                    const config::BackendConfig& b, backend::Role role,
                                                                    const std::vector<corpus::EmailRecord>& train) {
  if (b.kind == backend::BackendKind::Http) {
    backend::BackendDescriptor d = backend::http_backend(b.endpoint, b.model, role);
    d.http->retry_budget = b.retry_budget;
    d.http->max_in_flight = b.max_in_flight;
    d.http->timeout = std::chrono::milliseconds(b.timeout_ms);
    return backend::make_backend(d, b.api_key);
  }
  std::vector<corpus::EmailRecord> records;
  if (b.corpus == "train" || b.corpus == "none") {
    records = train;
    if (records.empty()) records.push_back(corpus::make_record("none", "", "", ""));
  } else {
    // A memorizing mock stands in for a model tuned on cleaned mail, so the
    // same filter applies to whatever file it memorizes.
    records = corpus::apply_filter_policy(load_corpus(cfg.resolve(b.corpus)), cfg.filter_policy()).kept;
    if (records.empty()) records.push_back(corpus::make_record("none", "", "", ""));
  }
  return backend::make_backend(
      backend::mock_memorizing_backend(std::move(records), b.leak_rate, cfg.backend_seed(b, role), role, b.corpus));
}

analysis::LeakageReport score(const pii::PiiSet& candidates, const pii::PiiSet* base, const pii::PiiSet& ground_truth,
                              std::map<std::string, std::string> metadata, std::size_t max_examples) {
  const pii::PiiSet scored = base ? analysis::filter_novel(candidates, *base) : candidates;
  metadata["base_subtraction"] = base ? "on" : "off";
  if (base) metadata["candidates_before_subtraction"] = std::to_string(candidates.size());
  return analysis::make_report(analysis::compute_metrics(scored, ground_truth), std::move(metadata), max_examples);
}

void write_reports(const analysis::LeakageReport& report, const fs::path& dir,
                   const std::vector<analysis::ReportFormat>& formats) {
  for (auto f : formats) {
    write_text(dir / ("report." + std::string(analysis::file_extension(f))), analysis::render_report(report, f));
  }
}

Prepared stage_prepare(const config::RunConfig& cfg, const fs::path& out) {
  Prepared p = prepare(cfg);
  const fs::path dir = prepared_dir(out);
  write_with(dir / "kept.jsonl", [&](std::ostream& o) { corpus::write_records_jsonl(p.filtered.kept, o); });
  write_with(dir / "rejected.jsonl", [&](std::ostream& o) {
    for (const auto& r : p.filtered.rejected) {
      nlohmann::ordered_json j{{"id", r.record.id}, {"reason", r.reason}};
      o << j.dump() << '\n';
    }
  });
  write_with(dir / "train.jsonl", [&](std::ostream& o) { corpus::write_records_jsonl(p.split.train, o); });
  write_with(dir / "ood.jsonl", [&](std::ostream& o) { corpus::write_records_jsonl(p.split.ood, o); });
  write_json(dir / "counts.json", {{"parsed", p.all.size()},
                                   {"kept", p.filtered.kept.size()},
                                   {"rejected", p.filtered.rejected.size()},
                                   {"train", p.split.train.size()},
                                   {"ood", p.split.ood.size()}});
  return p;
}

std::vector<corpus::FinetuneExample> stage_build(const config::RunConfig& cfg, const fs::path& out) {
  const auto train = load_records(prepared_dir(out) / "train.jsonl");
  auto examples = cfg.task == corpus::Task::Classification ? corpus::build_classification_examples(train)
                                                           : corpus::build_autocomplete_examples(train);
  write_with(finetune_dir(out) / ("examples_" + task_name(cfg.task) + ".jsonl"),
             [&](std::ostream& o) { corpus::write_examples_jsonl(examples, o); });
  return examples;
}

std::size_t stage_export(corpus::Task task, const fs::path& out) {
  auto in = open_in(finetune_dir(out) / ("examples_" + task_name(task) + ".jsonl"));
  const auto examples = corpus::read_examples_jsonl(in);
  std::size_t n = 0;
  write_with(finetune_dir(out) / ("finetune_" + task_name(task) + ".jsonl"),
             [&](std::ostream& o) { n = corpus::export_finetune_file(examples, o); });
  return n;
}

std::vector<SectionStatus> stage_attack(const config::RunConfig& cfg, const fs::path& out,
                                        std::optional<std::size_t> request_limit) {
  const auto train = load_records(prepared_dir(out) / "train.jsonl");
  auto ft = make_configured_backend(cfg, cfg.fine_tuned, backend::Role::FineTuned, train);
  std::unique_ptr<backend::CompletionBackend> base;
  if (uses_base(cfg)) base = make_configured_backend(cfg, cfg.base, backend::Role::Base, train);

  auto options_for = [&](const fs::path& dir) {
    auto o = cfg.run_options(dir);
    o.request_limit = request_limit;
    return o;
  };

  std::vector<SectionStatus> statuses;
  if (cfg.task == corpus::Task::Classification) {
    std::string reference;
    if (cfg.reference_text_path) reference = read_file(cfg.resolve(*cfg.reference_text_path));
    auto run = attack::run_naive_attack(*ft, *base, cfg.plan(attack::AttackKind::NaiveExtraction),
                                        attack::PromptSource::snippets(std::move(reference)),
                                        options_for(out / "classification" / "attack"));
    statuses.push_back({"classification", run.status});
    return statuses;
  }
  const auto plan = cfg.plan(attack::AttackKind::Autocomplete);
  for (const auto& [name, subjects] : planned_sections(cfg, out)) {
    auto run = attack::run_autocomplete_attack(*ft, subjects, plan, options_for(out / name / "attack"));
    attack::RunStatus status = run.status;
    if (base) {
      auto base_run = attack::run_autocomplete_attack(*base, subjects, plan, options_for(out / name / "base_attack"));
      status.total += base_run.status.total;
      status.completed += base_run.status.completed;
      status.failed += base_run.status.failed;
      status.new_requests += base_run.status.new_requests;
    }
    statuses.push_back({name, status});
  }
  return statuses;
}

std::vector<std::string> finished_sections(const config::RunConfig& cfg, const fs::path& out) {
  std::vector<std::string> names;
  for (const auto& [name, subjects] : planned_sections(cfg, out)) {
    (void)subjects;
    bool done = true;
    std::vector<fs::path> dirs = {out / name / "attack"};
    if (uses_base(cfg) && cfg.task != corpus::Task::Classification) dirs.push_back(out / name / "base_attack");
    for (const auto& dir : dirs) {
      const fs::path manifest = dir / std::string(attack::kManifestFile);
      if (!fs::exists(manifest)) {
        done = false;
        break;
      }
      const json status = read_json(manifest).value("status", json::object());
      const auto total = status.value("total", std::size_t{0});
      const auto completed = status.value("completed", std::size_t{0});
      if (completed < total) done = false;
    }
    if (done) names.push_back(name);
  }
  return names;
}

void stage_extract(const config::RunConfig& cfg, const fs::path& out) {
  const auto gazetteer = cfg.load_gazetteer();
  const auto patterns = cfg.load_patterns();
  const auto train = load_records(prepared_dir(out) / "train.jsonl");
  write_json(out / "ground_truth.json", pii::to_json(pii::build_ground_truth(train, gazetteer, patterns)));

  for (const auto& name : finished_sections(cfg, out)) {
    const fs::path dir = out / name;
    const auto e_ft = analysis::collect_extracted_pii(
        load_generations(attack::generations_path(dir / "attack", backend::Role::FineTuned)), gazetteer, patterns);
    write_json(dir / "pii_fine_tuned.json", pii::to_json(e_ft));
    if (uses_base(cfg)) {
      const auto e_base = analysis::collect_extracted_pii(
          load_generations(attack::generations_path(base_attack_dir(cfg, dir), backend::Role::Base)), gazetteer,
          patterns);
      write_json(dir / "pii_base.json", pii::to_json(e_base));
      write_json(dir / "pii_novel.json", pii::to_json(analysis::filter_novel(e_ft, e_base)));
    }
  }
}

std::vector<analysis::LeakageReport> stage_analyze(const config::RunConfig& cfg, const fs::path& out) {
  const pii::PiiSet ground_truth = pii::pii_set_from_json(read_json(out / "ground_truth.json"));
  const json counts = read_json(prepared_dir(out) / "counts.json");
  std::vector<analysis::LeakageReport> reports;
  for (const auto& name : finished_sections(cfg, out)) {
    const fs::path dir = out / name;
    const pii::PiiSet e_ft = pii::pii_set_from_json(read_json(dir / "pii_fine_tuned.json"));
    std::optional<pii::PiiSet> e_base;
    if (uses_base(cfg)) e_base = pii::pii_set_from_json(read_json(dir / "pii_base.json"));

    std::map<std::string, std::string> meta = {
        {"section", name},
        {"seed", std::to_string(cfg.seed)},
        {"task", task_name(cfg.task)},
        {"train_records", std::to_string(counts.value("train", 0))},
        {"ood_records", std::to_string(counts.value("ood", 0))},
        {"fine_tuned_backend", std::string(backend::to_string(cfg.fine_tuned.kind))},
        {"max_tokens", std::to_string(cfg.max_tokens)},
    };
    const auto ft_gen = load_generations(attack::generations_path(dir / "attack", backend::Role::FineTuned));
    std::size_t failed = count_failed(ft_gen);
    meta["queries"] = std::to_string(ft_gen.size());
    if (uses_base(cfg)) {
      failed += count_failed(load_generations(attack::generations_path(base_attack_dir(cfg, dir), backend::Role::Base)));
    }
    meta["failed_requests"] = std::to_string(failed);
    if (cfg.task == corpus::Task::Classification) {
      meta["blank_fraction"] = fmt_double(cfg.blank_fraction);
      meta["blank_prompts"] = std::to_string(attack::blank_prompt_count(cfg.plan(attack::AttackKind::NaiveExtraction)));
    }
    auto report = score(e_ft, e_base ? &*e_base : nullptr, ground_truth, std::move(meta), cfg.report_examples);
    write_json(dir / "analysis.json", analysis::to_json(report));
    reports.push_back(std::move(report));
  }
  return reports;
}

void stage_report(const config::RunConfig& cfg, const fs::path& out, const std::vector<analysis::ReportFormat>& formats) {
  for (const auto& name : finished_sections(cfg, out)) {
    const fs::path dir = out / name;
    write_reports(analysis::report_from_json(read_json(dir / "analysis.json")), dir, formats);
  }
}

bool AuditResult::complete() const {
  if (sections.empty()) return false;
  for (const auto& s : sections) {
    if (!s.status.complete()) return false;
  }
  return true;
}

AuditResult run_audit(const config::RunConfig& cfg, const fs::path& out, std::optional<std::size_t> request_limit) {
  cfg.validate();
  const Prepared prepared = stage_prepare(cfg, out);
  stage_build(cfg, out);
  stage_export(cfg.task, out);

  AuditResult result;
  result.sections = stage_attack(cfg, out, request_limit);
  if (result.complete()) {
    stage_extract(cfg, out);
    result.reports = stage_analyze(cfg, out);
    stage_report(cfg, out, all_formats());
  }

  json manifest;
  manifest["format"] = "leakprobe-run/1";
  manifest["config"] = cfg.to_manifest();
  manifest["counts"] = read_json(prepared_dir(out) / "counts.json");
  manifest["sections"] = json::array();
  for (const auto& s : result.sections) {
    manifest["sections"].push_back({{"name", s.name},
                                    {"complete", s.status.complete()},
                                    {"requests_total", s.status.total},
                                    {"requests_completed", s.status.completed},
                                    {"requests_failed", s.status.failed}});
  }
  write_json(out / "run_manifest.json", manifest);
  return result;
}

}  // namespace leakprobe::pipeline
