#include "leakprobe/error.hpp"

namespace leakprobe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::InvalidEncoding: return "InvalidEncoding";
    case ErrorKind::InvalidPolicy: return "InvalidPolicy";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InsufficientRecords: return "InsufficientRecords";
    case ErrorKind::MissingLabel: return "MissingLabel";
    case ErrorKind::MissingSubject: return "MissingSubject";
    case ErrorKind::NoExamples: return "NoExamples";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::SpanMismatch: return "SpanMismatch";
    case ErrorKind::EmptyAfterTrim: return "EmptyAfterTrim";
    case ErrorKind::NotCanonical: return "NotCanonical";
    case ErrorKind::InvalidGazetteer: return "InvalidGazetteer";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::ReferenceTooShort: return "ReferenceTooShort";
    case ErrorKind::PlanMismatch: return "PlanMismatch";
    case ErrorKind::RoleMismatch: return "RoleMismatch";
    case ErrorKind::ProvenanceMismatch: return "ProvenanceMismatch";
    case ErrorKind::MixedRoles: return "MixedRoles";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::UpstreamError: return "UpstreamError";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::BadResponse: return "BadResponse";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

bool is_runtime_failure(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RateLimited:
    case ErrorKind::UpstreamError:
    case ErrorKind::Timeout:
    case ErrorKind::BadResponse:
    case ErrorKind::TooManyFailures:
    case ErrorKind::Io:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

Error::Error(ErrorKind kind, const std::string& message, std::size_t line)
    : std::runtime_error(std::string(to_string(kind)) + " (line " + std::to_string(line) +
                         "): " + message),
      kind_(kind),
      line_(line) {}

}  // namespace leakprobe
