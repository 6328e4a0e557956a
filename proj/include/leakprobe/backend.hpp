#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leakprobe/corpus.hpp"

namespace leakprobe::backend {

inline constexpr const char* kApiKeyEnv = "LEAKPROBE_API_KEY";

/// Text the mock emits when it does not leak. Contains no digits and no
/// capitalised names.
inline constexpr std::string_view kMockFiller =
    "thanks for the note and for the update on the project. let me know if anything changes and "
    "we can talk about next steps when you have a moment. i will circle back later this week.";

struct GenerationConfig {
  int max_tokens = 256;
  /// Fixed temperature; when unset each request draws uniformly from
  /// [temperature_min, temperature_max] with a stream keyed on its index.
  std::optional<double> temperature;
  double temperature_min = 0.5;
  double temperature_max = 1.0;
  std::vector<std::string> stop;
  std::uint64_t seed = 0;

  void validate() const;
  double temperature_for(std::size_t request_index) const;
};

enum class BackendKind { Http, MockMemorizing };
enum class Role { FineTuned, Base };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);
std::string_view to_string(BackendKind kind);

struct HttpOptions {
  std::string endpoint;
  std::string model_id;
  std::chrono::milliseconds timeout{60000};
  int retry_budget = 5;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{32000};
  int max_in_flight = 4;
};

struct MockParams {
  std::shared_ptr<const std::vector<corpus::EmailRecord>> corpus;
  std::string corpus_ref;  // label recorded in manifests
  double leak_rate = 1.0;
  std::uint64_t seed = 0;
};

struct BackendDescriptor {
  BackendKind kind = BackendKind::MockMemorizing;
  Role role = Role::FineTuned;
  std::optional<HttpOptions> http;
  std::optional<MockParams> mock;

  void validate() const;
  /// Manifest form; never holds secrets.
  nlohmann::json to_json() const;
};

/// Throws EmptyCorpus or InvalidArgument (leak_rate outside [0, 1]).
BackendDescriptor mock_memorizing_backend(std::vector<corpus::EmailRecord> corpus, double leak_rate,
                                          std::uint64_t seed, Role role = Role::FineTuned,
                                          std::string corpus_ref = {});

BackendDescriptor http_backend(std::string endpoint, std::string model_id, Role role = Role::FineTuned);

/// Non-decreasing delays before retry 1..retry_budget.
std::vector<std::chrono::milliseconds> backoff_schedule(const HttpOptions& options);

// ---------------------------------------------------------------------------

struct GenerationRecord {
  std::size_t request_index = 0;
  std::string prompt;
  std::string completion;
  Role role = Role::FineTuned;
  int max_tokens = 0;
  double temperature = 0.0;
  std::string timestamp;  // empty for mock backends
  std::string prompt_kind;
  std::optional<std::size_t> subject_index;
  bool failed = false;
  std::string error;

  bool operator==(const GenerationRecord&) const = default;
};

nlohmann::json to_json(const GenerationRecord& r);
GenerationRecord generation_from_json(const nlohmann::json& j);
void write_generations_jsonl(const std::vector<GenerationRecord>& records, std::ostream& sink);
std::vector<GenerationRecord> read_generations_jsonl(std::istream& source);

// ---------------------------------------------------------------------------

/// Safe for concurrent calls.
class CompletionBackend {
 public:
  explicit CompletionBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {}
  virtual ~CompletionBackend() = default;

  virtual std::string complete(std::string_view prompt, const GenerationConfig& config,
                               std::size_t request_index) const = 0;

  const BackendDescriptor& descriptor() const { return descriptor_; }
  Role role() const { return descriptor_.role; }
  /// Whether records from this backend carry wall-clock timestamps.
  virtual bool stamps_time() const { return false; }

 private:
  BackendDescriptor descriptor_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// For Http descriptors the key comes from `api_key` or, when unset, from
/// LEAKPROBE_API_KEY; a missing key fails with ConfigError before any
/// request is made.
std::unique_ptr<CompletionBackend> make_backend(const BackendDescriptor& descriptor,
                                                std::optional<std::string> api_key = std::nullopt,
                                                Sleeper sleeper = {});

std::string complete(const BackendDescriptor& descriptor, std::string_view prompt,
                     const GenerationConfig& config, std::size_t request_index = 0);

/// Deterministic mock output for request `request_index`; exposed so tests
/// and oracles can enumerate what the mock can emit.
std::string mock_completion(const MockParams& params, std::size_t request_index, int max_tokens);
bool mock_leaks(const MockParams& params, std::size_t request_index);

struct TokenBudget {
  std::uint64_t max_tokens_total = 0;
  std::uint64_t approx_words = 0;

  bool operator==(const TokenBudget&) const = default;
};

/// Upper bound on generated tokens and its word equivalent at 3/4 word per
/// token, rounded half up.
TokenBudget estimate_token_budget(std::uint64_t n_queries, const GenerationConfig& config);

}  // namespace leakprobe::backend
