#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "leakprobe/analysis.hpp"
#include "leakprobe/cli.hpp"
#include "leakprobe/config.hpp"
#include "leakprobe/error.hpp"
#include "leakprobe/pipeline.hpp"
#include "leakprobe/toml_lite.hpp"
#include "support/scenario.hpp"

using namespace leakprobe;
using leakprobe::toml::parse;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn, std::optional<std::size_t>* line = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (line) *line = e.line();
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "leakprobe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void append(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::app);
  out << s;
}

void replace_in(const fs::path& p, const std::string& from, const std::string& to) {
  std::string s = scenario::read_file(p);
  const auto pos = s.find(from);
  ASSERT_NE(pos, std::string::npos) << from;
  s.replace(pos, from.size(), to);
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST(Toml, SubsetValues) {
  const auto j = parse(R"(
# comment
name = "a \"quoted\" \u00e9\n"   # trailing comment
path = 'C:\raw'
n = -42
x = 1.5e3
flag = true
list = [
  "one",   # inside
  "two",
]
[outer.inner]
k = 1
[other]
"quoted key" = [1, [2, 3]]
)");
  EXPECT_EQ(j["name"], "a \"quoted\" \xC3\xA9\n");
  EXPECT_EQ(j["path"], "C:\\raw");
  EXPECT_EQ(j["n"], -42);
  EXPECT_EQ(j["x"], 1500.0);
  EXPECT_EQ(j["flag"], true);
  EXPECT_EQ(j["list"], nlohmann::json({"one", "two"}));
  EXPECT_EQ(j["outer"]["inner"]["k"], 1);
  EXPECT_EQ(j["other"]["quoted key"][1][1], 3);
}

TEST(Toml, ErrorsCarryLines) {
  std::optional<std::size_t> line;
  EXPECT_EQ(kind_of([] { parse("a = 1\na = 2\n"); }, &line), ErrorKind::InvalidConfig);
  EXPECT_EQ(line, 2u);
  EXPECT_EQ(kind_of([] { parse("a = \"open\n"); }, &line), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { parse("x = 1\n[[arr]]\n"); }, &line), ErrorKind::InvalidConfig);
  EXPECT_EQ(line, 2u);
  EXPECT_EQ(kind_of([] { parse("a = nope\n"); }), ErrorKind::InvalidConfig);
}

TEST(Config, UnknownKeysAndSecrets) {
  EXPECT_EQ(kind_of([] { config::RunConfig::from_toml("[attack]\nn_query = 3\n", "."); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([] { config::RunConfig::from_toml("colour = 1\n", "."); }), ErrorKind::InvalidConfig);
  ::setenv("LEAKPROBE_TEST_SECRET", "s3cret", 1);
  const auto c = config::RunConfig::from_toml(
      "[backend.fine_tuned]\nkind = \"http\"\nendpoint = \"${HOST}\"\nmodel = \"m\"\napi_key = \"${LEAKPROBE_TEST_SECRET}\"\n",
      ".");
  EXPECT_EQ(c.fine_tuned.api_key, "s3cret");
  EXPECT_EQ(c.fine_tuned.endpoint, "${HOST}");
  EXPECT_EQ(c.to_manifest().dump().find("s3cret"), std::string::npos);
  EXPECT_EQ(c.backend_seed(c.fine_tuned, backend::Role::FineTuned), 0u);
  EXPECT_EQ(c.backend_seed(c.base, backend::Role::Base), 1u);
}

TEST(Config, ValidationChecksFilesAndKeys) {
  const auto dir = scenario::temp_dir("config-validate");
  const auto s = scenario::write(dir, scenario::Options{});
  EXPECT_NO_THROW(config::RunConfig::load(s.config_path).validate());
  fs::remove(dir / "reference.txt");
  EXPECT_EQ(kind_of([&] { config::RunConfig::load(s.config_path).validate(); }), ErrorKind::InvalidConfig);
  auto c = config::RunConfig::load(s.config_path);
  c.blank_fraction = 1.0;
  EXPECT_NO_THROW(c.validate());
  c.fine_tuned.kind = backend::BackendKind::Http;
  c.fine_tuned.endpoint = "http://127.0.0.1:9";
  c.fine_tuned.model = "m";
  ::unsetenv(backend::kApiKeyEnv);
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::ConfigError);
}

TEST(Cli, UsageErrors) {
  auto r = run({});
  EXPECT_EQ(r.code, 1);
  r = run({"audit", "--config", "x.toml", "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  r = run({"frobnicate"});
  EXPECT_EQ(r.code, 1);
  r = run({"audit", "--config", "x.toml", "--task", "summarize"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  r = run({"audit", "--config", "/nonexistent/run.toml"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ExportWithZeroExamples) {
  const auto dir = scenario::temp_dir("cli-empty-export");
  const auto s = scenario::write(dir, scenario::Options{});
  append(s.config_path, "\n[split]\ntrain_count = 0\n");
  const auto cfg = s.config_path.string();
  ASSERT_EQ(run({"prepare", "--config", cfg}).code, 0);
  ASSERT_EQ(run({"build", "--config", cfg}).code, 0);
  const auto r = run({"export", "--config", cfg});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no examples"), std::string::npos);
}

TEST(Cli, HttpWithoutKeyFailsValidation) {
  const auto dir = scenario::temp_dir("cli-no-key");
  const auto s = scenario::write(dir, scenario::Options{});
  replace_in(s.config_path, "[backend.fine_tuned]\nkind = \"mock\"",
             "[backend.fine_tuned]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:9\"\nmodel = \"m\"");
  ::unsetenv(backend::kApiKeyEnv);
  const auto r = run({"audit", "--config", s.config_path.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(backend::kApiKeyEnv), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out"));

  // --backend http on a mock config hits the same check.
  const auto s2 = scenario::write(scenario::temp_dir("cli-no-key-flag"), scenario::Options{});
  EXPECT_EQ(run({"attack", "--config", s2.config_path.string(), "--backend", "http"}).code, 1);
}

TEST(Cli, BackendFailureExitsTwo) {
  const auto dir = scenario::temp_dir("cli-upstream");
  scenario::Options o;
  o.n_queries = 4;
  const auto s = scenario::write(dir, o);
  replace_in(s.config_path, "[backend.fine_tuned]\nkind = \"mock\"",
             "[backend.fine_tuned]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:9\"\nmodel = \"m\"\n"
             "api_key = \"k\"\nretry_budget = 0\ntimeout_ms = 2000");
  const auto r = run({"audit", "--config", s.config_path.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("TooManyFailures"), std::string::npos);
}

TEST(Cli, StagesComposeToTheAuditResult) {
  const auto dir = scenario::temp_dir("cli-stages");
  scenario::Options o;
  o.ft_leak = 0.7;
  o.base_leak = 0.2;
  const auto s = scenario::write(dir, o);
  const auto cfg = s.config_path.string();
  ASSERT_EQ(run({"audit", "--config", cfg, "--out", (dir / "audit").string()}).code, 0);
  const auto staged = (dir / "staged").string();
  for (const char* stage : {"prepare", "build", "export", "attack", "extract", "analyze", "report"}) {
    const auto r = run({stage, "--config", cfg, "--out", staged});
    ASSERT_EQ(r.code, 0) << stage << ": " << r.err;
  }
  for (const char* f : {"classification/report.txt", "classification/report.csv", "classification/report.json",
                        "finetune/finetune_classification.jsonl", "ground_truth.json"}) {
    EXPECT_EQ(scenario::read_file(dir / "audit" / f), scenario::read_file(dir / "staged" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir / "audit" / "run_manifest.json"));
}

TEST(Cli, SeedAndTaskOverrides) {
  const auto dir = scenario::temp_dir("cli-overrides");
  scenario::Options o;
  o.ft_leak = 0.5;
  const auto s = scenario::write(dir, o);
  const auto cfg = s.config_path.string();
  ASSERT_EQ(run({"audit", "--config", cfg, "--out", (dir / "a").string(), "--seed", "1"}).code, 0);
  ASSERT_EQ(run({"audit", "--config", cfg, "--out", (dir / "b").string(), "--seed", "2"}).code, 0);
  EXPECT_NE(scenario::read_file(dir / "a" / "classification/report.json"),
            scenario::read_file(dir / "b" / "classification/report.json"));
  const auto r = run({"audit", "--config", cfg, "--out", (dir / "c").string(), "--task", "autocomplete"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "c" / "autocomplete/train/report.csv"));
  EXPECT_TRUE(fs::exists(dir / "c" / "finetune/finetune_autocomplete.jsonl"));
}

// The bundled sample: its report must agree with the brute-force oracle.
TEST(Cli, BundledSampleAuditMatchesOracle) {
  const fs::path data = LEAKPROBE_DATA_DIR;
  const auto regenerated = synth::make_corpus(40, 96, 2024);
  ASSERT_TRUE(scenario::read_file(data / "emails.csv").starts_with(synth::to_csv(regenerated.records)))
      << "data/emails.csv no longer matches its generator";

  const auto out = scenario::temp_dir("cli-sample");
  const auto r = run({"audit", "--config", (data / "run.toml").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;

  scenario::Scenario s;
  s.corpus = regenerated;
  // Ground truth is the train split the pipeline chose.
  std::ifstream train_in(out / "prepared/train.jsonl");
  const auto train = corpus::read_records_jsonl(train_in);
  s.corpus.records = train;
  s.n_train = train.size();
  EXPECT_EQ(train.size(), 30u);
  const auto section = out / "classification";
  const auto o = scenario::oracle_for(s, section, true, section / "attack");
  const auto report = analysis::parse_report_json(scenario::read_file(section / "report.json"));
  EXPECT_EQ(report.precision, o.scores.precision);
  EXPECT_EQ(report.recall, o.scores.recall);
  EXPECT_GT(report.precision, 0.0);
  EXPECT_LT(report.precision, 1.0);

  std::ifstream rejected(out / "prepared/rejected.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(rejected, line)) ++n;
  EXPECT_EQ(n, 4u);
}
