#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/backend.hpp"

namespace leakprobe::attack {

enum class AttackKind { NaiveExtraction, Autocomplete };

std::string_view to_string(AttackKind kind);

struct AttackPlan {
  AttackKind kind = AttackKind::NaiveExtraction;
  std::size_t n_queries = 1800;
  double blank_fraction = 0.5;
  std::size_t snippet_length_chars = 100;
  std::size_t queries_per_subject = 5;
  backend::GenerationConfig config;
  std::uint64_t seed = 0;

  static AttackPlan naive_extraction();
  static AttackPlan autocomplete();

  void validate() const;
  nlohmann::json to_json() const;
};

enum class PromptSourceKind { ReferenceCorpusSnippets, Blank, SubjectList };

struct PromptSource {
  PromptSourceKind kind = PromptSourceKind::ReferenceCorpusSnippets;
  std::string reference_text;
  std::vector<std::string> subjects;

  static PromptSource snippets(std::string reference_text);
  static PromptSource blank();
  static PromptSource subject_list(std::vector<std::string> subjects);
};

struct PlannedPrompt {
  std::string text;
  std::string kind;  // "blank", "snippet" or "subject"
  std::optional<std::size_t> subject_index;
};

/// `count` slices of exactly `length_chars` code points, none containing the
/// classification separator. Throws ReferenceTooShort.
std::vector<std::string> sample_naive_prompts(std::string_view reference_text, std::size_t count,
                                              std::size_t length_chars, std::uint64_t seed);

/// round(blank_fraction * n_queries), halves rounded away from zero.
std::size_t blank_prompt_count(const AttackPlan& plan);

/// Blank and snippet prompts alternate (even indices blank) while both
/// kinds remain; the larger kind fills the tail.
std::vector<PlannedPrompt> plan_naive_prompts(const AttackPlan& plan, const PromptSource& source);

/// Subject s, query k sits at index s * queries_per_subject + k.
std::vector<PlannedPrompt> plan_autocomplete_prompts(const AttackPlan& plan,
                                                     const std::vector<std::string>& subjects);

// ---------------------------------------------------------------------------

struct RunOptions {
  /// Checkpoint directory; empty runs in memory only.
  std::filesystem::path out_dir;
  std::size_t checkpoint_every = 32;
  int max_parallel = 1;
  double failure_threshold = 0.10;
  /// Stop after this many new requests (per invocation). Used to bound a
  /// session; the run continues on the next call with the same out_dir.
  std::optional<std::size_t> request_limit;
};

struct RunStatus {
  std::size_t total = 0;      // planned requests over all backends
  std::size_t completed = 0;  // records present, failed ones included
  std::size_t failed = 0;
  std::size_t new_requests = 0;

  bool complete() const { return completed == total; }
};

struct NaiveRunResult {
  std::vector<backend::GenerationRecord> fine_tuned;
  std::vector<backend::GenerationRecord> base;
  RunStatus status;
};

struct AutocompleteRunResult {
  std::vector<backend::GenerationRecord> records;
  RunStatus status;
};

inline constexpr std::string_view kManifestFile = "attack_manifest.json";

std::filesystem::path generations_path(const std::filesystem::path& dir, backend::Role role);

/// Sends the same prompt sequence to both backends. Starts fresh or, when
/// `out_dir` already holds a checkpoint for the same plan, continues it.
NaiveRunResult run_naive_attack(const backend::CompletionBackend& fine_tuned,
                                const backend::CompletionBackend& base, const AttackPlan& plan,
                                const PromptSource& source, const RunOptions& options = {});

AutocompleteRunResult run_autocomplete_attack(const backend::CompletionBackend& model,
                                              const std::vector<std::string>& subjects,
                                              const AttackPlan& plan, const RunOptions& options = {});

/// Like the run functions but require an existing checkpoint in
/// options.out_dir. Throws CorruptCheckpoint if none, PlanMismatch if the
/// stored plan hash differs from the one recomputed from the arguments.
NaiveRunResult resume_naive_attack(const backend::CompletionBackend& fine_tuned,
                                   const backend::CompletionBackend& base, const AttackPlan& plan,
                                   const PromptSource& source, const RunOptions& options);
AutocompleteRunResult resume_autocomplete_attack(const backend::CompletionBackend& model,
                                                 const std::vector<std::string>& subjects,
                                                 const AttackPlan& plan, const RunOptions& options);

/// Hex FNV-1a 64 over the plan, prompt source and backend descriptors.
std::string plan_hash(const AttackPlan& plan, const std::vector<PlannedPrompt>& prompts,
                      const std::vector<const backend::BackendDescriptor*>& backends);

/// Atomic replace: write `path`.tmp, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace leakprobe::attack
