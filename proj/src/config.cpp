#include "leakprobe/config.hpp"

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "leakprobe/error.hpp"
#include "leakprobe/text.hpp"
#include "leakprobe/toml_lite.hpp"

namespace leakprobe::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

void check_keys(const json& table, std::string_view where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : table.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) bad("unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
T get(const json& table, const char* key, std::string_view where) {
  const auto& v = table.at(key);
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(std::string(where) + "." + key + " must be a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(std::string(where) + "." + key + " must be a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad(std::string(where) + "." + key + " must be a number");
    } else {
      if (!v.is_number_integer()) bad(std::string(where) + "." + key + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<std::int64_t>() < 0) bad(std::string(where) + "." + key + " must be non-negative");
      }
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    bad(std::string(where) + "." + key + ": " + e.what());
  }
}

template <typename T>
void read(const json& table, const char* key, std::string_view where, T& out) {
  if (table.contains(key)) out = get<T>(table, key, where);
}

template <typename T>
void read(const json& table, const char* key, std::string_view where, std::optional<T>& out) {
  if (table.contains(key)) out = get<T>(table, key, where);
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  auto it = root.find(name);
  if (it == root.end()) return empty;
  if (!it->is_object()) bad(std::string("[") + name + "] must be a table");
  return *it;
}

std::string interpolate_secret(const std::string& value) {
  if (value.size() > 3 && value.starts_with("${") && value.ends_with("}")) {
    const std::string name = value.substr(2, value.size() - 3);
    const char* env = std::getenv(name.c_str());
    return env ? std::string(env) : std::string{};
  }
  return value;
}

BackendConfig read_backend(const json& table, std::string_view where, BackendConfig b) {
  check_keys(table, where,
             {"kind", "leak_rate", "seed", "corpus", "endpoint", "model", "api_key", "retry_budget", "max_in_flight",
              "timeout_ms"});
  if (table.contains("kind")) {
    const auto kind = text::to_lower_ascii(get<std::string>(table, "kind", where));
    if (kind == "mock") {
      b.kind = backend::BackendKind::MockMemorizing;
    } else if (kind == "http") {
      b.kind = backend::BackendKind::Http;
    } else {
      bad(std::string(where) + ".kind must be \"mock\" or \"http\"");
    }
  }
  read(table, "leak_rate", where, b.leak_rate);
  read(table, "seed", where, b.seed);
  read(table, "corpus", where, b.corpus);
  read(table, "endpoint", where, b.endpoint);
  read(table, "model", where, b.model);
  if (table.contains("api_key")) b.api_key = interpolate_secret(get<std::string>(table, "api_key", where));
  read(table, "retry_budget", where, b.retry_budget);
  read(table, "max_in_flight", where, b.max_in_flight);
  read(table, "timeout_ms", where, b.timeout_ms);
  return b;
}

}  // namespace

corpus::InputFormat format_for_path(const fs::path& p) {
  const auto ext = text::to_lower_ascii(p.extension().string());
  if (ext == ".csv") return corpus::InputFormat::Csv;
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return corpus::InputFormat::Jsonl;
  bad("cannot infer corpus format from '" + p.string() + "'; set corpus.format");
}

RunConfig RunConfig::from_toml(std::string_view document, const fs::path& base_dir) {
  const json root = toml::parse(document);
  check_keys(root, "top level",
             {"seed", "task", "output_dir", "corpus", "filter", "split", "pii", "attack", "backend", "report"});
  RunConfig c;
  c.base_dir = base_dir;
  read(root, "seed", "top level", c.seed);
  if (root.contains("task")) {
    try {
      c.task = corpus::parse_task(get<std::string>(root, "task", "top level"));
    } catch (const Error& e) {
      bad(e.what());
    }
  }
  if (root.contains("output_dir")) c.output_dir = get<std::string>(root, "output_dir", "top level");

  const auto& corpus_t = section(root, "corpus");
  check_keys(corpus_t, "[corpus]", {"path", "format"});
  if (corpus_t.contains("path")) c.corpus_path = get<std::string>(corpus_t, "path", "corpus");
  if (corpus_t.contains("format")) {
    const auto f = text::to_lower_ascii(get<std::string>(corpus_t, "format", "corpus"));
    if (f == "csv") {
      c.corpus_format = corpus::InputFormat::Csv;
    } else if (f == "jsonl") {
      c.corpus_format = corpus::InputFormat::Jsonl;
    } else {
      bad("corpus.format must be \"csv\" or \"jsonl\"");
    }
  }

  const auto& filter = section(root, "filter");
  check_keys(filter, "[filter]", {"min_sentences", "min_words", "max_words", "exclusion_heuristics"});
  read(filter, "min_sentences", "filter", c.min_sentences);
  read(filter, "min_words", "filter", c.min_words);
  read(filter, "max_words", "filter", c.max_words);
  read(filter, "exclusion_heuristics", "filter", c.exclusion_heuristics);

  const auto& split = section(root, "split");
  check_keys(split, "[split]", {"train_count"});
  read(split, "train_count", "split", c.train_count);

  const auto& pii_t = section(root, "pii");
  check_keys(pii_t, "[pii]", {"gazetteer", "patterns", "pattern_categories"});
  if (pii_t.contains("gazetteer")) c.gazetteer_path = get<std::string>(pii_t, "gazetteer", "pii");
  if (pii_t.contains("patterns")) c.patterns_path = fs::path(get<std::string>(pii_t, "patterns", "pii"));
  if (pii_t.contains("pattern_categories")) {
    c.pattern_categories.clear();
    for (const auto& v : pii_t.at("pattern_categories")) {
      if (!v.is_string()) bad("pii.pattern_categories must list category names");
      try {
        c.pattern_categories.insert(pii::parse_category(v.get<std::string>()));
      } catch (const Error& e) {
        bad(e.what());
      }
    }
  }

  const auto& atk = section(root, "attack");
  check_keys(atk, "[attack]",
             {"n_queries", "blank_fraction", "snippet_length_chars", "queries_per_subject", "max_tokens", "temperature",
              "temperature_min", "temperature_max", "reference_text", "base_subtraction", "checkpoint_every",
              "max_parallel", "failure_threshold"});
  read(atk, "n_queries", "attack", c.n_queries);
  read(atk, "blank_fraction", "attack", c.blank_fraction);
  read(atk, "snippet_length_chars", "attack", c.snippet_length_chars);
  read(atk, "queries_per_subject", "attack", c.queries_per_subject);
  read(atk, "max_tokens", "attack", c.max_tokens);
  read(atk, "temperature", "attack", c.temperature);
  read(atk, "temperature_min", "attack", c.temperature_min);
  read(atk, "temperature_max", "attack", c.temperature_max);
  if (atk.contains("reference_text")) c.reference_text_path = fs::path(get<std::string>(atk, "reference_text", "attack"));
  read(atk, "base_subtraction", "attack", c.autocomplete_base_subtraction);
  read(atk, "checkpoint_every", "attack", c.checkpoint_every);
  read(atk, "max_parallel", "attack", c.max_parallel);
  read(atk, "failure_threshold", "attack", c.failure_threshold);

  const auto& backends = section(root, "backend");
  check_keys(backends, "[backend]", {"fine_tuned", "base"});
  if (backends.contains("fine_tuned")) c.fine_tuned = read_backend(backends.at("fine_tuned"), "backend.fine_tuned", c.fine_tuned);
  if (backends.contains("base")) c.base = read_backend(backends.at("base"), "backend.base", c.base);

  const auto& report = section(root, "report");
  check_keys(report, "[report]", {"examples"});
  read(report, "examples", "report", c.report_examples);
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_toml(ss.str(), fs::absolute(path).parent_path());
}

fs::path RunConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

void RunConfig::validate() const {
  auto must_exist = [this](const fs::path& p, const char* what) {
    if (p.empty()) bad(std::string(what) + " is not set");
    if (!fs::exists(resolve(p))) bad(std::string(what) + " not found: " + resolve(p).string());
  };
  must_exist(corpus_path, "corpus.path");
  must_exist(gazetteer_path, "pii.gazetteer");
  if (patterns_path) must_exist(*patterns_path, "pii.patterns");
  filter_policy().validate();
  plan(attack::AttackKind::NaiveExtraction).validate();
  if (task == corpus::Task::Classification && blank_fraction < 1.0) {
    if (!reference_text_path) bad("attack.reference_text is required for snippet prompts");
    must_exist(*reference_text_path, "attack.reference_text");
  }
  if (checkpoint_every < 1 || max_parallel < 1) bad("checkpoint_every and max_parallel must be >= 1");
  if (!(failure_threshold >= 0.0 && failure_threshold <= 1.0)) bad("failure_threshold must lie in [0, 1]");

  for (const auto* b : {&fine_tuned, &base}) {
    const char* name = b == &fine_tuned ? "backend.fine_tuned" : "backend.base";
    if (b->kind == backend::BackendKind::Http) {
      if (b->endpoint.empty() || b->model.empty()) bad(std::string(name) + " needs endpoint and model");
      if (b->retry_budget < 0 || b->max_in_flight < 1 || b->timeout_ms < 1) {
        bad(std::string(name) + " has an invalid retry/concurrency/timeout setting");
      }
      const bool has_key = b->api_key ? !b->api_key->empty() : [] {
        const char* env = std::getenv(backend::kApiKeyEnv);
        return env != nullptr && *env != '\0';
      }();
      if (!has_key) {
        throw Error(ErrorKind::ConfigError,
                    std::string(name) + " is an http backend but " + backend::kApiKeyEnv + " is not set");
      }
    } else {
      if (!(b->leak_rate >= 0.0 && b->leak_rate <= 1.0)) bad(std::string(name) + ".leak_rate must lie in [0, 1]");
      if (b->corpus == "none" && b->leak_rate != 0.0) bad(std::string(name) + " with corpus \"none\" needs leak_rate 0");
      if (b->corpus != "train" && b->corpus != "none") must_exist(b->corpus, name);
    }
  }
}

corpus::FilterPolicy RunConfig::filter_policy() const {
  auto p = exclusion_heuristics ? corpus::FilterPolicy::with_default_heuristics()
                                : corpus::FilterPolicy::thresholds_only();
  p.min_sentences = min_sentences;
  p.min_words = min_words;
  p.max_words = max_words;
  return p;
}

attack::AttackPlan RunConfig::plan(attack::AttackKind kind) const {
  attack::AttackPlan p;
  p.kind = kind;
  p.n_queries = n_queries;
  p.blank_fraction = blank_fraction;
  p.snippet_length_chars = snippet_length_chars;
  p.queries_per_subject = queries_per_subject;
  p.seed = seed;
  p.config.max_tokens = max_tokens;
  p.config.temperature = temperature;
  p.config.temperature_min = temperature_min;
  p.config.temperature_max = temperature_max;
  p.config.seed = seed;
  return p;
}

attack::RunOptions RunConfig::run_options(const fs::path& dir) const {
  attack::RunOptions o;
  o.out_dir = dir;
  o.checkpoint_every = checkpoint_every;
  o.max_parallel = max_parallel;
  o.failure_threshold = failure_threshold;
  return o;
}

pii::Gazetteer RunConfig::load_gazetteer() const {
  std::ifstream in(resolve(gazetteer_path), std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read gazetteer " + resolve(gazetteer_path).string());
  return pii::Gazetteer::load(in);
}

pii::PatternSet RunConfig::load_patterns() const {
  if (!patterns_path) return pii::PatternSet::defaults_for(pattern_categories);
  std::ifstream in(resolve(*patterns_path), std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read patterns " + resolve(*patterns_path).string());
  try {
    return pii::PatternSet::from_json(json::parse(in));
  } catch (const json::exception& e) {
    bad(std::string("pattern file: ") + e.what());
  }
}

std::uint64_t RunConfig::backend_seed(const BackendConfig& b, backend::Role role) const {
  if (b.seed) return *b.seed;
  return role == backend::Role::FineTuned ? seed : seed + 1;
}

json RunConfig::to_manifest() const {
  auto backend_json = [this](const BackendConfig& b, backend::Role role) {
    json j{{"kind", backend::to_string(b.kind)}};
    if (b.kind == backend::BackendKind::Http) {
      j["endpoint"] = b.endpoint;
      j["model"] = b.model;
      j["retry_budget"] = b.retry_budget;
      j["max_in_flight"] = b.max_in_flight;
      j["timeout_ms"] = b.timeout_ms;
      j["sampling_defaults"] = "top_p, frequency and presence penalties left at endpoint defaults";
    } else {
      j["leak_rate"] = b.leak_rate;
      j["seed"] = backend_seed(b, role);
      j["corpus"] = b.corpus;
    }
    return j;
  };
  json cats = json::array();
  for (auto c : pattern_categories) cats.push_back(pii::to_string(c));
  json j{{"seed", seed},
         {"task", corpus::to_string(task)},
         {"corpus", {{"path", corpus_path.string()}}},
         {"filter",
          {{"min_sentences", min_sentences},
           {"min_words", min_words},
           {"max_words", max_words},
           {"exclusion_heuristics", exclusion_heuristics}}},
         {"split", {{"train_count", train_count ? json(*train_count) : json(nullptr)}}},
         {"pii",
          {{"gazetteer", gazetteer_path.string()},
           {"patterns", patterns_path ? json(patterns_path->string()) : json(nullptr)},
           {"pattern_categories", cats}}},
         {"attack",
          {{"n_queries", n_queries},
           {"blank_fraction", blank_fraction},
           {"snippet_length_chars", snippet_length_chars},
           {"queries_per_subject", queries_per_subject},
           {"max_tokens", max_tokens},
           {"temperature", temperature ? json(*temperature) : json(nullptr)},
           {"temperature_min", temperature_min},
           {"temperature_max", temperature_max},
           {"reference_text", reference_text_path ? json(reference_text_path->string()) : json(nullptr)},
           {"base_subtraction", autocomplete_base_subtraction},
           {"checkpoint_every", checkpoint_every},
           {"max_parallel", max_parallel},
           {"failure_threshold", failure_threshold}}},
         {"backend",
          {{"fine_tuned", backend_json(fine_tuned, backend::Role::FineTuned)},
           {"base", backend_json(base, backend::Role::Base)}}},
         {"report", {{"examples", report_examples}}}};
  return j;
}

}  // namespace leakprobe::config
