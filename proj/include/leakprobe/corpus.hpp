#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace leakprobe::corpus {

struct EmailRecord {
  std::string id;
  std::string folder;
  std::string subject;
  std::string body;
  std::size_t word_count = 0;
  std::size_t sentence_count = 0;
  bool empty_body = false;

  bool operator==(const EmailRecord&) const = default;
};

/// Builds a record with counts derived from the body.
EmailRecord make_record(std::string id, std::string folder, std::string subject, std::string body);

enum class InputFormat { Csv, Jsonl };

/// Reads CSV (header row naming folder, subject, body and optionally id;
/// RFC-4180 quoting) or JSONL (keys folder, subject, body, optional id).
/// Records without an id get "email-NNNNNN" from their 1-based position.
std::vector<EmailRecord> parse_email_corpus(std::istream& source, InputFormat format);

std::vector<EmailRecord> read_records_jsonl(std::istream& source);
void write_records_jsonl(const std::vector<EmailRecord>& records, std::ostream& sink);

// ---------------------------------------------------------------------------
// Filtering

struct NamedPredicate {
  std::string name;
  std::function<bool(const EmailRecord&)> matches;
};

struct FilterPolicy {
  std::size_t min_sentences = 3;
  std::size_t min_words = 25;
  std::size_t max_words = 256;
  std::vector<NamedPredicate> exclusion_heuristics;
  NamedPredicate low_natural_language;

  /// Thresholds plus the default notification/bulletin/promotion/
  /// customer-service keyword detectors and the non-alphabetic ratio check.
  static FilterPolicy with_default_heuristics();
  /// Thresholds only.
  static FilterPolicy thresholds_only();

  void validate() const;
};

/// Keyword lists used by the default exclusion heuristics.
const std::vector<std::pair<std::string, std::vector<std::string>>>& default_exclusion_keywords();

/// Fraction of non-whitespace characters that are not ASCII letters or
/// non-ASCII text; the default low-natural-language detector fires at >= 0.30.
double non_alphabetic_ratio(std::string_view body);
inline constexpr double kLowNaturalLanguageRatio = 0.30;

struct Rejection {
  EmailRecord record;
  std::string reason;
};

struct FilterResult {
  std::vector<EmailRecord> kept;
  std::vector<Rejection> rejected;
};

FilterResult apply_filter_policy(const std::vector<EmailRecord>& records, const FilterPolicy& policy);

// ---------------------------------------------------------------------------
// Train / OOD split

struct CorpusSplit {
  std::vector<EmailRecord> train;
  std::vector<EmailRecord> ood;
  std::uint64_t seed = 0;
};

/// Sorts by id, Fisher-Yates shuffles with SplitMix64(seed) and takes the
/// first train_count records as train.
CorpusSplit split_train_ood(const std::vector<EmailRecord>& records, std::size_t train_count,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fine-tune examples

enum class Task { Classification, Autocomplete };

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

inline constexpr std::string_view kClassificationSeparator = "\n\n###\n\n";
inline constexpr std::string_view kAutocompletePrefix =
    "Generate the body of an email from the following subject line. Subject: ";

struct FinetuneExample {
  Task task = Task::Classification;
  std::string prompt;
  std::string completion;
  std::string source_id;

  bool operator==(const FinetuneExample&) const = default;
};

std::vector<FinetuneExample> build_classification_examples(
    const std::vector<EmailRecord>& records,
    std::string_view separator = kClassificationSeparator);

std::vector<FinetuneExample> build_autocomplete_examples(const std::vector<EmailRecord>& records);

std::string autocomplete_prompt(std::string_view subject);

/// One `{"prompt":..., "completion":...}` object per line, LF terminated.
std::size_t export_finetune_file(const std::vector<FinetuneExample>& examples, std::ostream& sink);

/// Reads a fine-tune file back as (prompt, completion) pairs.
std::vector<std::pair<std::string, std::string>> parse_finetune_file(std::istream& source);

/// Internal example file that keeps task and source id alongside the pair.
void write_examples_jsonl(const std::vector<FinetuneExample>& examples, std::ostream& sink);
std::vector<FinetuneExample> read_examples_jsonl(std::istream& source);

}  // namespace leakprobe::corpus
