#include "leakprobe/backend.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <semaphore>
#include <thread>

#include "leakprobe/error.hpp"
#include "leakprobe/rng.hpp"
#include "leakprobe/text.hpp"

namespace leakprobe::backend {

using nlohmann::json;
using nlohmann::ordered_json;

void GenerationConfig::validate() const {
  if (max_tokens < 1) throw Error(ErrorKind::InvalidConfig, "max_tokens must be >= 1");
  auto in_range = [](double t) { return t >= 0.0 && t <= 2.0; };
  if (temperature && !in_range(*temperature)) throw Error(ErrorKind::InvalidConfig, "temperature must lie in [0, 2]");
  if (!in_range(temperature_min) || !in_range(temperature_max) || temperature_min > temperature_max) {
    throw Error(ErrorKind::InvalidConfig, "temperature range must satisfy 0 <= min <= max <= 2");
  }
}

double GenerationConfig::temperature_for(std::size_t request_index) const {
  if (temperature) return *temperature;
  auto rng = SplitMix64::for_index(seed ^ 0x7465'6d70'6572'6174ULL, request_index);
  return temperature_min + (temperature_max - temperature_min) * rng.unit();
}

std::string_view to_string(Role role) { return role == Role::FineTuned ? "fine_tuned" : "base"; }

Role parse_role(std::string_view name) {
  const auto lower = text::to_lower_ascii(name);
  if (lower == "fine_tuned" || lower == "ft" || lower == "finetuned") return Role::FineTuned;
  if (lower == "base") return Role::Base;
  throw Error(ErrorKind::InvalidArgument, "unknown backend role '" + std::string(name) + "'");
}

std::string_view to_string(BackendKind kind) { return kind == BackendKind::Http ? "http" : "mock"; }

void BackendDescriptor::validate() const {
  if (kind == BackendKind::Http) {
    if (!http || mock) throw Error(ErrorKind::InvalidConfig, "http backend needs http options and no mock params");
    if (http->endpoint.empty() || http->model_id.empty()) {
      throw Error(ErrorKind::InvalidConfig, "http backend needs endpoint and model_id");
    }
    if (http->retry_budget < 0 || http->max_in_flight < 1) {
      throw Error(ErrorKind::InvalidConfig, "retry_budget must be >= 0 and max_in_flight >= 1");
    }
  } else {
    if (!mock || http) throw Error(ErrorKind::InvalidConfig, "mock backend needs mock params and no http options");
    if (!mock->corpus || mock->corpus->empty()) throw Error(ErrorKind::EmptyCorpus, "mock backend corpus is empty");
    if (!(mock->leak_rate >= 0.0 && mock->leak_rate <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "leak_rate must lie in [0, 1]");
    }
  }
}

json BackendDescriptor::to_json() const {
  ordered_json j{{"kind", to_string(kind)}, {"role", to_string(role)}};
  if (http) {
    j["endpoint"] = http->endpoint;
    j["model_id"] = http->model_id;
    j["timeout_ms"] = http->timeout.count();
    j["retry_budget"] = http->retry_budget;
    j["max_in_flight"] = http->max_in_flight;
  }
  if (mock) {
    j["corpus_ref"] = mock->corpus_ref;
    j["corpus_size"] = mock->corpus ? mock->corpus->size() : 0;
    j["leak_rate"] = mock->leak_rate;
    j["seed"] = mock->seed;
  }
  return json::parse(j.dump());
}

BackendDescriptor mock_memorizing_backend(std::vector<corpus::EmailRecord> corpus, double leak_rate,
                                          std::uint64_t seed, Role role, std::string corpus_ref) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "mock backend corpus is empty");
  BackendDescriptor d;
  d.kind = BackendKind::MockMemorizing;
  d.role = role;
  d.mock = MockParams{std::make_shared<const std::vector<corpus::EmailRecord>>(std::move(corpus)),
                      std::move(corpus_ref), leak_rate, seed};
  d.validate();
  return d;
}

BackendDescriptor http_backend(std::string endpoint, std::string model_id, Role role) {
  BackendDescriptor d;
  d.kind = BackendKind::Http;
  d.role = role;
  d.http = HttpOptions{};
  d.http->endpoint = std::move(endpoint);
  d.http->model_id = std::move(model_id);
  d.validate();
  return d;
}

std::vector<std::chrono::milliseconds> backoff_schedule(const HttpOptions& options) {
  std::vector<std::chrono::milliseconds> delays;
  auto delay = options.backoff_initial;
  for (int k = 0; k < options.retry_budget; ++k) {
    delays.push_back(std::min(delay, options.backoff_max));
    if (delay < options.backoff_max) delay *= 2;
  }
  return delays;
}

// ---------------------------------------------------------------------------

json to_json(const GenerationRecord& r) {
  ordered_json j{{"request_index", r.request_index},
                 {"role", to_string(r.role)},
                 {"prompt_kind", r.prompt_kind},
                 {"prompt", r.prompt},
                 {"completion", r.completion},
                 {"max_tokens", r.max_tokens},
                 {"temperature", r.temperature},
                 {"timestamp", r.timestamp},
                 {"failed", r.failed}};
  if (r.subject_index) j["subject_index"] = *r.subject_index;
  if (r.failed) j["error"] = r.error;
  return json::parse(j.dump());
}

GenerationRecord generation_from_json(const json& j) {
  GenerationRecord r;
  r.request_index = j.at("request_index").get<std::size_t>();
  r.role = parse_role(j.at("role").get<std::string>());
  r.prompt_kind = j.value("prompt_kind", std::string{});
  r.prompt = j.at("prompt").get<std::string>();
  r.completion = j.at("completion").get<std::string>();
  r.max_tokens = j.at("max_tokens").get<int>();
  r.temperature = j.at("temperature").get<double>();
  r.timestamp = j.value("timestamp", std::string{});
  r.failed = j.value("failed", false);
  r.error = j.value("error", std::string{});
  if (j.contains("subject_index")) r.subject_index = j.at("subject_index").get<std::size_t>();
  return r;
}

void write_generations_jsonl(const std::vector<GenerationRecord>& records, std::ostream& sink) {
  for (const auto& r : records) {
    // ordered_json keeps the field order stable in persisted files
    ordered_json j{{"request_index", r.request_index},
                   {"role", to_string(r.role)},
                   {"prompt_kind", r.prompt_kind},
                   {"prompt", r.prompt},
                   {"completion", r.completion},
                   {"max_tokens", r.max_tokens},
                   {"temperature", r.temperature},
                   {"timestamp", r.timestamp},
                   {"failed", r.failed}};
    if (r.subject_index) j["subject_index"] = *r.subject_index;
    if (r.failed) j["error"] = r.error;
    sink << j.dump() << '\n';
  }
  if (!sink) throw Error(ErrorKind::Io, "failed writing generation records");
}

std::vector<GenerationRecord> read_generations_jsonl(std::istream& source) {
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(source, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(generation_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::CorruptCheckpoint, e.what(), n);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::string first_words(std::string_view s, int max_words) {
  const auto spans = text::word_spans(s);
  if (spans.empty()) return {};
  const std::size_t take = std::min(spans.size(), static_cast<std::size_t>(max_words));
  return std::string(s.substr(spans.front().first, spans[take - 1].second - spans.front().first));
}

SplitMix64 mock_stream(const MockParams& params, std::size_t request_index) {
  return SplitMix64::for_index(params.seed, request_index);
}

}  // namespace

bool mock_leaks(const MockParams& params, std::size_t request_index) {
  auto rng = mock_stream(params, request_index);
  return rng.unit() < params.leak_rate;
}

std::string mock_completion(const MockParams& params, std::size_t request_index, int max_tokens) {
  auto rng = mock_stream(params, request_index);
  if (!(rng.unit() < params.leak_rate)) return first_words(kMockFiller, max_tokens);

  const auto& record = (*params.corpus)[request_index % params.corpus->size()];
  const std::string_view body = record.body;
  const auto spans = text::word_spans(body);
  if (spans.empty()) return {};
  const auto window = static_cast<std::size_t>(max_tokens);
  std::size_t first = 0;
  std::size_t last = spans.size();
  if (spans.size() > window) {
    first = static_cast<std::size_t>(rng.below(spans.size() - window + 1));
    last = first + window;
  }
  return std::string(body.substr(spans[first].first, spans[last - 1].second - spans[first].first));
}

namespace {

class MockBackend final : public CompletionBackend {
 public:
  using CompletionBackend::CompletionBackend;

  std::string complete(std::string_view, const GenerationConfig& config, std::size_t request_index) const override {
    return mock_completion(*descriptor().mock, request_index, config.max_tokens);
  }
};

// ---------------------------------------------------------------------------
// HTTP

struct ParsedEndpoint {
  std::string scheme_host_port;
  std::string base_path;
  bool https = false;
};

ParsedEndpoint parse_endpoint(std::string_view endpoint) {
  ParsedEndpoint out;
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorKind::ConfigError, "endpoint needs a scheme: " + std::string(endpoint));
  const auto scheme = text::to_lower_ascii(endpoint.substr(0, scheme_end));
  if (scheme != "http" && scheme != "https") throw Error(ErrorKind::ConfigError, "unsupported scheme " + scheme);
  out.https = scheme == "https";
  const auto rest = endpoint.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  out.scheme_host_port = scheme + "://" + std::string(rest.substr(0, slash));
  if (slash != std::string_view::npos) out.base_path = std::string(rest.substr(slash));
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

class HttpBackend final : public CompletionBackend {
 public:
  HttpBackend(BackendDescriptor d, std::string api_key, Sleeper sleeper)
      : CompletionBackend(std::move(d)),
        api_key_(std::move(api_key)),
        sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds ms) {
          std::this_thread::sleep_for(ms);
        })),
        endpoint_(parse_endpoint(descriptor().http->endpoint)),
        in_flight_(descriptor().http->max_in_flight) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (endpoint_.https) throw Error(ErrorKind::ConfigError, "built without TLS support; https endpoints unavailable");
#endif
  }

  bool stamps_time() const override { return true; }

  std::string complete(std::string_view prompt, const GenerationConfig& config,
                       std::size_t request_index) const override {
    const auto& opts = *descriptor().http;
    ordered_json body{{"model", opts.model_id},
                      {"prompt", std::string(prompt)},
                      {"max_tokens", config.max_tokens},
                      {"temperature", config.temperature_for(request_index)}};
    if (!config.stop.empty()) body["stop"] = config.stop;
    const std::string payload = body.dump();
    const std::string path = endpoint_.base_path + "/v1/completions";
    const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
    const auto delays = backoff_schedule(opts);

    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{in_flight_};

    for (std::size_t attempt = 0;; ++attempt) {
      httplib::Client client(endpoint_.scheme_host_port);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());

      auto res = client.Post(path, headers, payload, "application/json");
      ErrorKind retry_kind;
      std::string detail;
      if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
          throw Error(ErrorKind::Timeout, "request " + std::to_string(request_index) + ": " + httplib::to_string(err));
        }
        retry_kind = ErrorKind::UpstreamError;
        detail = httplib::to_string(err);
      } else if (res->status == 200) {
        return parse_completion(res->body);
      } else if (res->status == 401 || res->status == 403) {
        throw Error(ErrorKind::ConfigError, "endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
      } else if (res->status == 429) {
        retry_kind = ErrorKind::RateLimited;
        detail = "HTTP 429";
      } else if (res->status >= 500) {
        retry_kind = ErrorKind::UpstreamError;
        detail = "HTTP " + std::to_string(res->status);
      } else {
        throw Error(ErrorKind::BadResponse, "HTTP " + std::to_string(res->status) + ": " + res->body);
      }
      if (attempt >= delays.size()) {
        throw Error(retry_kind, "request " + std::to_string(request_index) + " gave up after " +
                                    std::to_string(attempt + 1) + " attempts (" + detail + ")");
      }
      sleeper_(delays[attempt]);
    }
  }

 private:
  static std::string parse_completion(const std::string& body) {
    try {
      const json j = json::parse(body);
      return j.at("choices").at(0).at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::BadResponse, std::string("unexpected completion payload: ") + e.what());
    }
  }

  std::string api_key_;
  Sleeper sleeper_;
  ParsedEndpoint endpoint_;
  mutable std::counting_semaphore<> in_flight_;
};

}  // namespace

std::unique_ptr<CompletionBackend> make_backend(const BackendDescriptor& descriptor, std::optional<std::string> api_key,
                                                Sleeper sleeper) {
  descriptor.validate();
  if (descriptor.kind == BackendKind::MockMemorizing) return std::make_unique<MockBackend>(descriptor);
  if (!api_key) {
    const char* env = std::getenv(kApiKeyEnv);
    if (env == nullptr || *env == '\0') {
      throw Error(ErrorKind::ConfigError, std::string(kApiKeyEnv) + " is not set");
    }
    api_key = env;
  }
  return std::make_unique<HttpBackend>(descriptor, std::move(*api_key), std::move(sleeper));
}

std::string complete(const BackendDescriptor& descriptor, std::string_view prompt, const GenerationConfig& config,
                     std::size_t request_index) {
  config.validate();
  return make_backend(descriptor)->complete(prompt, config, request_index);
}

TokenBudget estimate_token_budget(std::uint64_t n_queries, const GenerationConfig& config) {
  config.validate();
  TokenBudget b;
  b.max_tokens_total = n_queries * static_cast<std::uint64_t>(config.max_tokens);
  b.approx_words = (b.max_tokens_total * 3 + 2) / 4;
  return b;
}

}  // namespace leakprobe::backend
