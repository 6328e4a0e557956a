#include "leakprobe/attack.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "leakprobe/corpus.hpp"
#include "leakprobe/error.hpp"
#include "leakprobe/rng.hpp"
#include "leakprobe/text.hpp"

namespace leakprobe::attack {

namespace fs = std::filesystem;
using backend::CompletionBackend;
using backend::GenerationRecord;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(AttackKind kind) {
  return kind == AttackKind::NaiveExtraction ? "naive_extraction" : "autocomplete";
}

AttackPlan AttackPlan::naive_extraction() { return AttackPlan{}; }

AttackPlan AttackPlan::autocomplete() {
  AttackPlan p;
  p.kind = AttackKind::Autocomplete;
  return p;
}

void AttackPlan::validate() const {
  if (n_queries < 1) throw Error(ErrorKind::InvalidConfig, "n_queries must be >= 1");
  if (!(blank_fraction >= 0.0 && blank_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "blank_fraction must lie in [0, 1]");
  }
  if (snippet_length_chars < 1) throw Error(ErrorKind::InvalidConfig, "snippet_length_chars must be >= 1");
  if (queries_per_subject < 1) throw Error(ErrorKind::InvalidConfig, "queries_per_subject must be >= 1");
  config.validate();
}

json AttackPlan::to_json() const {
  ordered_json j{{"kind", to_string(kind)},
                 {"n_queries", n_queries},
                 {"blank_fraction", blank_fraction},
                 {"snippet_length_chars", snippet_length_chars},
                 {"queries_per_subject", queries_per_subject},
                 {"seed", seed},
                 {"max_tokens", config.max_tokens},
                 {"temperature_min", config.temperature_min},
                 {"temperature_max", config.temperature_max},
                 {"config_seed", config.seed},
                 {"stop", config.stop}};
  j["temperature"] = config.temperature ? json(*config.temperature) : json(nullptr);
  return json::parse(j.dump());
}

PromptSource PromptSource::snippets(std::string reference_text) {
  return {PromptSourceKind::ReferenceCorpusSnippets, std::move(reference_text), {}};
}

PromptSource PromptSource::blank() { return {PromptSourceKind::Blank, {}, {}}; }

PromptSource PromptSource::subject_list(std::vector<std::string> subjects) {
  return {PromptSourceKind::SubjectList, {}, std::move(subjects)};
}

// ---------------------------------------------------------------------------

std::vector<std::string> sample_naive_prompts(std::string_view reference_text, std::size_t count,
                                              std::size_t length_chars, std::uint64_t seed) {
  if (length_chars < 1) throw Error(ErrorKind::InvalidArgument, "snippet length must be >= 1");
  if (!text::is_valid_utf8(reference_text)) throw Error(ErrorKind::InvalidEncoding, "reference text is not UTF-8");
  const auto offsets = text::utf8_offsets(reference_text);
  const std::size_t chars = offsets.size() - 1;
  if (chars < length_chars) {
    throw Error(ErrorKind::ReferenceTooShort, "reference text has " + std::to_string(chars) +
                                                  " characters, snippets need " + std::to_string(length_chars));
  }
  const std::size_t windows = chars - length_chars + 1;
  constexpr std::size_t kMaxDrawsPerPrompt = 1000;

  std::vector<std::string> out;
  out.reserve(count);
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxDrawsPerPrompt && !placed; ++attempt) {
      const auto start = static_cast<std::size_t>(rng.below(windows));
      const auto b = offsets[start];
      const auto e = offsets[start + length_chars];
      std::string_view slice = reference_text.substr(b, e - b);
      if (slice.find(corpus::kClassificationSeparator) != std::string_view::npos) continue;
      out.emplace_back(slice);
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorKind::ReferenceTooShort, "no snippet window free of the classification separator");
    }
  }
  return out;
}

std::size_t blank_prompt_count(const AttackPlan& plan) {
  return static_cast<std::size_t>(std::llround(plan.blank_fraction * static_cast<double>(plan.n_queries)));
}

std::vector<PlannedPrompt> plan_naive_prompts(const AttackPlan& plan, const PromptSource& source) {
  plan.validate();
  if (plan.kind != AttackKind::NaiveExtraction) throw Error(ErrorKind::InvalidArgument, "plan is not a naive extraction plan");
  std::size_t blanks = blank_prompt_count(plan);
  std::size_t snippets_needed = plan.n_queries - blanks;
  std::vector<std::string> snippets;
  if (snippets_needed > 0) {
    if (source.kind != PromptSourceKind::ReferenceCorpusSnippets) {
      throw Error(ErrorKind::InvalidArgument, "snippet prompts need a reference corpus source");
    }
    snippets = sample_naive_prompts(source.reference_text, snippets_needed, plan.snippet_length_chars, plan.seed);
  }

  std::vector<PlannedPrompt> out;
  out.reserve(plan.n_queries);
  std::size_t next_snippet = 0;
  for (std::size_t i = 0; i < plan.n_queries; ++i) {
    const bool snippets_left = next_snippet < snippets.size();
    const bool want_blank = i % 2 == 0;
    if ((want_blank && blanks > 0) || !snippets_left) {
      out.push_back({std::string{}, "blank", std::nullopt});
      --blanks;
    } else {
      out.push_back({snippets[next_snippet++], "snippet", std::nullopt});
    }
  }
  return out;
}

std::vector<PlannedPrompt> plan_autocomplete_prompts(const AttackPlan& plan, const std::vector<std::string>& subjects) {
  plan.validate();
  if (plan.kind != AttackKind::Autocomplete) throw Error(ErrorKind::InvalidArgument, "plan is not an autocomplete plan");
  if (subjects.empty()) throw Error(ErrorKind::InvalidArgument, "autocomplete attack needs at least one subject");
  std::vector<PlannedPrompt> out;
  out.reserve(subjects.size() * plan.queries_per_subject);
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    std::string prompt = corpus::autocomplete_prompt(subjects[s]);
    if (prompt.find(corpus::kClassificationSeparator) != std::string::npos) {
      throw Error(ErrorKind::InvalidArgument, "subject " + std::to_string(s) + " contains the classification separator");
    }
    for (std::size_t k = 0; k < plan.queries_per_subject; ++k) out.push_back({prompt, "subject", s});
  }
  return out;
}

// ---------------------------------------------------------------------------

fs::path generations_path(const fs::path& dir, backend::Role role) {
  return dir / ("generations_" + std::string(backend::to_string(role)) + ".jsonl");
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string plan_hash(const AttackPlan& plan, const std::vector<PlannedPrompt>& prompts,
                      const std::vector<const backend::BackendDescriptor*>& backends) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;  // field separator
    h *= 0x100000001b3ULL;
  };
  feed(plan.to_json().dump());
  for (const auto* b : backends) feed(b->to_json().dump());
  for (const auto& p : prompts) {
    feed(p.kind);
    feed(p.text);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct Lane {
  const CompletionBackend* backend;
  std::vector<std::optional<GenerationRecord>> slots;
};

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class RunSession {
 public:
  RunSession(std::vector<Lane> lanes, std::vector<PlannedPrompt> prompts, const AttackPlan& plan,
             const RunOptions& options, json manifest_base)
      : lanes_(std::move(lanes)), prompts_(std::move(prompts)), plan_(plan), options_(options) {
    std::vector<const backend::BackendDescriptor*> descriptors;
    for (const auto& lane : lanes_) descriptors.push_back(&lane.backend->descriptor());
    hash_ = plan_hash(plan_, prompts_, descriptors);
    manifest_ = std::move(manifest_base);
    manifest_["plan_hash"] = hash_;
    for (auto& lane : lanes_) lane.slots.assign(prompts_.size(), std::nullopt);
  }

  RunStatus run(bool require_checkpoint) {
    if (options_.checkpoint_every < 1) throw Error(ErrorKind::InvalidConfig, "checkpoint_every must be >= 1");
    if (options_.max_parallel < 1) throw Error(ErrorKind::InvalidConfig, "max_parallel must be >= 1");
    if (!(options_.failure_threshold >= 0.0 && options_.failure_threshold <= 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "failure_threshold must lie in [0, 1]");
    }
    const bool persist = !options_.out_dir.empty();
    if (persist) {
      load_checkpoint(require_checkpoint);
    } else if (require_checkpoint) {
      throw Error(ErrorKind::CorruptCheckpoint, "resume needs a checkpoint directory");
    }

    std::vector<std::pair<std::size_t, std::size_t>> pending;  // (index, lane)
    for (std::size_t i = 0; i < prompts_.size(); ++i) {
      for (std::size_t l = 0; l < lanes_.size(); ++l) {
        if (!lanes_[l].slots[i]) pending.emplace_back(i, l);
      }
    }
    if (options_.request_limit && pending.size() > *options_.request_limit) pending.resize(*options_.request_limit);

    RunStatus status;
    for (std::size_t start = 0; start < pending.size(); start += options_.checkpoint_every) {
      const std::size_t stop = std::min(pending.size(), start + options_.checkpoint_every);
      std::exception_ptr fatal = execute_batch(pending, start, stop);
      status.new_requests += stop - start;
      if (persist) write_checkpoint();
      if (fatal) std::rethrow_exception(fatal);
      check_failure_budget();
    }
    if (persist && pending.empty()) write_checkpoint();

    fill_status(status);
    return status;
  }

  std::vector<GenerationRecord> records(std::size_t lane) const {
    std::vector<GenerationRecord> out;
    for (const auto& slot : lanes_[lane].slots) {
      if (slot) out.push_back(*slot);
    }
    return out;
  }

 private:
  std::exception_ptr execute_batch(const std::vector<std::pair<std::size_t, std::size_t>>& pending,
                                   std::size_t start, std::size_t stop) {
    std::vector<GenerationRecord> results(stop - start);
    std::exception_ptr fatal;
    const auto n = static_cast<std::ptrdiff_t>(stop - start);
#pragma omp parallel for schedule(dynamic, 1) num_threads(options_.max_parallel)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      const auto [index, lane] = pending[start + static_cast<std::size_t>(k)];
      const auto& prompt = prompts_[index];
      const CompletionBackend& b = *lanes_[lane].backend;
      GenerationRecord& r = results[static_cast<std::size_t>(k)];
      r.request_index = index;
      r.prompt = prompt.text;
      r.prompt_kind = prompt.kind;
      r.subject_index = prompt.subject_index;
      r.role = b.role();
      r.max_tokens = plan_.config.max_tokens;
      r.temperature = plan_.config.temperature_for(index);
      try {
        r.completion = b.complete(prompt.text, plan_.config, index);
      } catch (const Error& e) {
        r.failed = true;
        r.error = std::string(to_string(e.kind()));
        if (e.kind() == ErrorKind::ConfigError) {
#pragma omp critical(leakprobe_attack_fatal)
          if (!fatal) fatal = std::current_exception();
        }
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
      if (b.stamps_time()) r.timestamp = utc_timestamp();
    }
    if (fatal) return fatal;
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      const auto [index, lane] = pending[start + static_cast<std::size_t>(k)];
      lanes_[lane].slots[index] = std::move(results[static_cast<std::size_t>(k)]);
    }
    return nullptr;
  }

  void check_failure_budget() const {
    std::size_t failed = 0;
    std::size_t total = 0;
    for (const auto& lane : lanes_) {
      total += lane.slots.size();
      for (const auto& s : lane.slots) failed += s && s->failed ? 1 : 0;
    }
    if (static_cast<double>(failed) > options_.failure_threshold * static_cast<double>(total)) {
      throw Error(ErrorKind::TooManyFailures, std::to_string(failed) + " of " + std::to_string(total) +
                                                  " requests failed, above the failure threshold");
    }
  }

  void fill_status(RunStatus& status) const {
    for (const auto& lane : lanes_) {
      status.total += lane.slots.size();
      for (const auto& s : lane.slots) {
        if (!s) continue;
        ++status.completed;
        if (s->failed) ++status.failed;
      }
    }
  }

  fs::path manifest_path() const { return options_.out_dir / std::string(kManifestFile); }

  void load_checkpoint(bool require_checkpoint) {
    fs::create_directories(options_.out_dir);
    if (!fs::exists(manifest_path())) {
      if (require_checkpoint) throw Error(ErrorKind::CorruptCheckpoint, "no checkpoint in " + options_.out_dir.string());
      for (const auto& lane : lanes_) {
        if (fs::exists(generations_path(options_.out_dir, lane.backend->role()))) {
          throw Error(ErrorKind::CorruptCheckpoint,
                      "generation records without a manifest in " + options_.out_dir.string());
        }
      }
      return;
    }
    json stored;
    try {
      stored = json::parse(read_text(manifest_path()));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::CorruptCheckpoint, std::string("unreadable manifest: ") + e.what());
    }
    if (stored.value("plan_hash", std::string{}) != hash_) {
      throw Error(ErrorKind::PlanMismatch, "checkpoint in " + options_.out_dir.string() + " belongs to another plan");
    }
    for (auto& lane : lanes_) {
      const auto path = generations_path(options_.out_dir, lane.backend->role());
      if (!fs::exists(path)) continue;
      std::ifstream in(path, std::ios::binary);
      for (auto& r : backend::read_generations_jsonl(in)) {
        if (r.request_index >= prompts_.size() || lane.slots[r.request_index]) {
          throw Error(ErrorKind::CorruptCheckpoint, "bad or duplicate request index " + std::to_string(r.request_index));
        }
        if (r.prompt != prompts_[r.request_index].text || r.role != lane.backend->role()) {
          throw Error(ErrorKind::PlanMismatch, "checkpointed prompt " + std::to_string(r.request_index) +
                                                   " differs from the plan");
        }
        lane.slots[r.request_index] = std::move(r);
      }
    }
  }

  void write_checkpoint() {
    for (const auto& lane : lanes_) {
      std::ostringstream out;
      std::vector<GenerationRecord> present;
      for (const auto& s : lane.slots) {
        if (s) present.push_back(*s);
      }
      backend::write_generations_jsonl(present, out);
      write_file_atomic(generations_path(options_.out_dir, lane.backend->role()), out.str());
    }
    RunStatus status;
    fill_status(status);
    manifest_["status"] = {{"total", status.total}, {"completed", status.completed}, {"failed", status.failed}};
    write_file_atomic(manifest_path(), manifest_.dump(2) + "\n");
  }

  std::vector<Lane> lanes_;
  std::vector<PlannedPrompt> prompts_;
  const AttackPlan& plan_;
  const RunOptions& options_;
  std::string hash_;
  json manifest_;
};

json manifest_base(const AttackPlan& plan, const std::vector<const CompletionBackend*>& backends,
                   const std::vector<PlannedPrompt>& prompts) {
  json m;
  m["format"] = "leakprobe-attack/1";
  m["plan"] = plan.to_json();
  m["backends"] = json::array();
  for (const auto* b : backends) m["backends"].push_back(b->descriptor().to_json());
  m["n_prompts"] = prompts.size();
  return m;
}

NaiveRunResult naive_impl(const CompletionBackend& ft, const CompletionBackend& base, const AttackPlan& plan,
                          const PromptSource& source, const RunOptions& options, bool require_checkpoint) {
  if (ft.role() != backend::Role::FineTuned || base.role() != backend::Role::Base) {
    throw Error(ErrorKind::RoleMismatch, "naive attack needs a fine-tuned and a base backend");
  }
  auto prompts = plan_naive_prompts(plan, source);
  auto manifest = manifest_base(plan, {&ft, &base}, prompts);
  RunSession session({{&ft, {}}, {&base, {}}}, std::move(prompts), plan, options, std::move(manifest));
  NaiveRunResult result;
  result.status = session.run(require_checkpoint);
  result.fine_tuned = session.records(0);
  result.base = session.records(1);
  return result;
}

AutocompleteRunResult autocomplete_impl(const CompletionBackend& model, const std::vector<std::string>& subjects,
                                        const AttackPlan& plan, const RunOptions& options, bool require_checkpoint) {
  auto prompts = plan_autocomplete_prompts(plan, subjects);
  auto manifest = manifest_base(plan, {&model}, prompts);
  RunSession session({{&model, {}}}, std::move(prompts), plan, options, std::move(manifest));
  AutocompleteRunResult result;
  result.status = session.run(require_checkpoint);
  result.records = session.records(0);
  return result;
}

}  // namespace

NaiveRunResult run_naive_attack(const CompletionBackend& fine_tuned, const CompletionBackend& base,
                                const AttackPlan& plan, const PromptSource& source, const RunOptions& options) {
  return naive_impl(fine_tuned, base, plan, source, options, false);
}

AutocompleteRunResult run_autocomplete_attack(const CompletionBackend& model, const std::vector<std::string>& subjects,
                                              const AttackPlan& plan, const RunOptions& options) {
  return autocomplete_impl(model, subjects, plan, options, false);
}

NaiveRunResult resume_naive_attack(const CompletionBackend& fine_tuned, const CompletionBackend& base,
                                   const AttackPlan& plan, const PromptSource& source, const RunOptions& options) {
  return naive_impl(fine_tuned, base, plan, source, options, true);
}

AutocompleteRunResult resume_autocomplete_attack(const CompletionBackend& model,
                                                 const std::vector<std::string>& subjects, const AttackPlan& plan,
                                                 const RunOptions& options) {
  return autocomplete_impl(model, subjects, plan, options, true);
}

}  // namespace leakprobe::attack
