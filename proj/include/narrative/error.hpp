#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace narrative {

enum class ErrorKind {
  InvalidArgument,
  Io,
  DuplicateDocumentId,
  UnknownFrameLabel,
  MalformedRecord,
  MalformedConllu,
  HeadOutOfRange,
  UnparsedDocument,
  RelationAbsent,
  SpanNotAligned,
  PreconditionFailed,
  DimensionMismatch,
  NonFiniteLoss,
  EmptyExpansion,
  EmptyGeneration,
  ProviderUnavailable,
  ProtocolError,
  MissingArtifact,
  StaleArtifact,
  Locked,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  bool retryable() const noexcept {
    return kind_ == ErrorKind::ProviderUnavailable;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace narrative
