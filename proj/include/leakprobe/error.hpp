#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace leakprobe {

enum class ErrorKind {
  // input / validation
  MissingField,
  MalformedRow,
  InvalidEncoding,
  InvalidPolicy,
  InvalidArgument,
  InvalidConfig,
  DuplicateId,
  InsufficientRecords,
  MissingLabel,
  MissingSubject,
  NoExamples,
  UnknownCategory,
  SpanMismatch,
  EmptyAfterTrim,
  NotCanonical,
  InvalidGazetteer,
  EmptyCorpus,
  ReferenceTooShort,
  PlanMismatch,
  RoleMismatch,
  ProvenanceMismatch,
  MixedRoles,
  CorruptCheckpoint,
  // backend
  ConfigError,
  RateLimited,
  UpstreamError,
  Timeout,
  BadResponse,
  // runtime
  TooManyFailures,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// True for kinds that describe a failure at run time (network, I/O, attack
/// failure budget) rather than bad input or configuration.
bool is_runtime_failure(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  Error(ErrorKind kind, const std::string& message, std::size_t line);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> line_;
};

}  // namespace leakprobe
