#include "leakprobe/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leakprobe/error.hpp"
#include "leakprobe/pipeline.hpp"

namespace leakprobe::cli {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string task;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
  auto* c = cmd->add_option("--config", f.config, "run configuration (TOML)");
  if (config_required) c->required();
  cmd->add_option("--out", f.out, "output directory (overrides output_dir)");
  cmd->add_option("--seed", f.seed, "global seed (overrides seed)");
  cmd->add_option("--backend", f.backend, "fine-tuned model backend")->check(CLI::IsMember({"mock", "http"}));
  cmd->add_option("--task", f.task, "fine-tuning task")->check(CLI::IsMember({"classification", "autocomplete"}));
}

config::RunConfig load_config(const CommonFlags& f) {
  config::RunConfig cfg = config::RunConfig::load(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.task.empty()) cfg.task = corpus::parse_task(f.task);
  if (f.backend == "mock") cfg.fine_tuned.kind = backend::BackendKind::MockMemorizing;
  if (f.backend == "http") cfg.fine_tuned.kind = backend::BackendKind::Http;
  if (!f.out.empty()) cfg.output_dir = fs::absolute(f.out);
  cfg.validate();
  return cfg;
}

fs::path out_dir(const config::RunConfig& cfg) { return cfg.resolve(cfg.output_dir); }

void print_status(std::ostream& out, const std::vector<pipeline::SectionStatus>& statuses) {
  for (const auto& s : statuses) {
    out << s.name << ": " << s.status.completed << "/" << s.status.total << " requests";
    if (s.status.failed) out << " (" << s.status.failed << " failed)";
    out << (s.status.complete() ? "" : ", incomplete; rerun to resume") << '\n';
  }
}

void print_reports(std::ostream& out, const std::vector<analysis::LeakageReport>& reports) {
  for (const auto& r : reports) {
    auto it = r.metadata.find("section");
    out << (it != r.metadata.end() ? it->second : std::string("report")) << ": "
        << r.totals.matched_count << " leaked PIIs, precision " << r.precision * 100.0 << "%, recall "
        << r.recall * 100.0 << "%\n";
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"leakprobe: measure PII leakage from fine-tuned language models"};
  app.require_subcommand(1);

  CommonFlags f;
  std::optional<std::size_t> limit;
  std::vector<std::string> formats;

  auto* prepare = app.add_subcommand("prepare", "parse, filter and split the email corpus");
  add_common(prepare, f);
  auto* build = app.add_subcommand("build", "build fine-tuning examples from the train split");
  add_common(build, f);
  auto* exp = app.add_subcommand("export", "write the fine-tuning JSONL file");
  add_common(exp, f, false);
  auto* atk = app.add_subcommand("attack", "query the models (resumes an unfinished run)");
  add_common(atk, f);
  atk->add_option("--limit", limit, "stop after this many new requests per attack");
  auto* extract = app.add_subcommand("extract", "extract PIIs from generations and the train split");
  add_common(extract, f);
  auto* analyze = app.add_subcommand("analyze", "compute precision, recall and the category breakdown");
  add_common(analyze, f);
  auto* report = app.add_subcommand("report", "render reports from analysis results");
  add_common(report, f);
  report->add_option("--format", formats, "text, csv or json (repeatable; default all)")
      ->check(CLI::IsMember({"text", "csv", "json"}));
  auto* audit = app.add_subcommand("audit", "run every stage");
  add_common(audit, f);
  audit->add_option("--limit", limit, "stop after this many new requests per attack");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (*exp) {
      corpus::Task task = corpus::Task::Classification;
      fs::path dir = f.out.empty() ? fs::path(".") : fs::path(f.out);
      if (!f.config.empty()) {
        const auto cfg = load_config(f);
        task = cfg.task;
        dir = out_dir(cfg);
      }
      if (!f.task.empty()) task = corpus::parse_task(f.task);
      const std::size_t n = pipeline::stage_export(task, dir);
      out << "exported " << n << " examples\n";
      return 0;
    }

    const auto cfg = load_config(f);
    const fs::path dir = out_dir(cfg);
    if (*prepare) {
      const auto p = pipeline::stage_prepare(cfg, dir);
      out << "parsed " << p.all.size() << ", kept " << p.filtered.kept.size() << ", rejected "
          << p.filtered.rejected.size() << ", train " << p.split.train.size() << ", ood " << p.split.ood.size()
          << '\n';
    } else if (*build) {
      out << "built " << pipeline::stage_build(cfg, dir).size() << " examples\n";
    } else if (*atk) {
      const auto statuses = pipeline::stage_attack(cfg, dir, limit);
      print_status(out, statuses);
    } else if (*extract) {
      pipeline::stage_extract(cfg, dir);
      out << "extracted " << pipeline::finished_sections(cfg, dir).size() << " sections\n";
    } else if (*analyze) {
      print_reports(out, pipeline::stage_analyze(cfg, dir));
    } else if (*report) {
      std::vector<analysis::ReportFormat> fmts;
      for (const auto& name : formats) fmts.push_back(analysis::parse_report_format(name));
      pipeline::stage_report(cfg, dir, fmts.empty() ? pipeline::all_formats() : fmts);
      out << "reports written under " << dir.string() << '\n';
    } else if (*audit) {
      const auto result = pipeline::run_audit(cfg, dir, limit);
      print_status(out, result.sections);
      print_reports(out, result.reports);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_runtime_failure(e.kind()) ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace leakprobe::cli
