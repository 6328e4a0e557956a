#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "leakprobe/analysis.hpp"
#include "leakprobe/attack.hpp"
#include "leakprobe/corpus.hpp"
#include "leakprobe/pii.hpp"

namespace leakprobe::config {

struct BackendConfig {
  backend::BackendKind kind = backend::BackendKind::MockMemorizing;
  // mock
  double leak_rate = 1.0;
  std::optional<std::uint64_t> seed;
  /// "train" (the fine-tuning split), "none" (filler only; leak_rate must
  /// be 0) or a corpus file path.
  std::string corpus = "train";
  // http
  std::string endpoint;
  std::string model;
  std::optional<std::string> api_key;  // after ${VAR} interpolation
  int retry_budget = 5;
  int max_in_flight = 4;
  int timeout_ms = 60000;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::uint64_t seed = 0;
  corpus::Task task = corpus::Task::Classification;
  std::filesystem::path output_dir = "leakprobe-out";

  std::filesystem::path corpus_path;
  std::optional<corpus::InputFormat> corpus_format;  // by extension when unset

  std::size_t min_sentences = 3;
  std::size_t min_words = 25;
  std::size_t max_words = 256;
  bool exclusion_heuristics = true;

  std::optional<std::size_t> train_count;  // all kept records when unset

  std::filesystem::path gazetteer_path;
  std::optional<std::filesystem::path> patterns_path;
  std::set<pii::Category> pattern_categories = {pii::Category::Money, pii::Category::Date, pii::Category::Cardinal};

  std::size_t n_queries = 1800;
  double blank_fraction = 0.5;
  std::size_t snippet_length_chars = 100;
  std::size_t queries_per_subject = 5;
  int max_tokens = 256;
  std::optional<double> temperature;
  double temperature_min = 0.5;
  double temperature_max = 1.0;
  std::optional<std::filesystem::path> reference_text_path;
  bool autocomplete_base_subtraction = false;

  std::size_t checkpoint_every = 32;
  int max_parallel = 1;
  double failure_threshold = 0.10;

  BackendConfig fine_tuned;
  BackendConfig base = [] {
    BackendConfig b;
    b.leak_rate = 0.0;
    return b;
  }();

  std::size_t report_examples = analysis::kDefaultExamples;

  /// Unknown keys are rejected. `${NAME}` is expanded from the environment
  /// in `api_key` values only.
  static RunConfig from_toml(std::string_view document, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  std::filesystem::path resolve(const std::filesystem::path& p) const;

  /// Checks value ranges, that every referenced file exists and that http
  /// backends have an API key. Throws InvalidConfig or ConfigError.
  void validate() const;

  corpus::FilterPolicy filter_policy() const;
  attack::AttackPlan plan(attack::AttackKind kind) const;
  attack::RunOptions run_options(const std::filesystem::path& dir) const;
  pii::Gazetteer load_gazetteer() const;
  pii::PatternSet load_patterns() const;

  std::uint64_t backend_seed(const BackendConfig& b, backend::Role role) const;

  /// Reproducible description of the run; secrets are omitted.
  nlohmann::json to_manifest() const;
};

corpus::InputFormat format_for_path(const std::filesystem::path& p);

}  // namespace leakprobe::config
