#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snapdiag {

enum class ErrorCode {
  DimensionMismatch,
  DegenerateVector,
  NonFiniteValue,
  NormViolation,
  DuplicateId,
  InvariantViolation,
  IoFailure,
  BadMagic,
  TruncatedFile,
  ManifestGap,
  MalformedManifest,
  MissingVector,
  DuplicateVector,
  UnknownVector,
  InvalidRelevance,
  InvalidConfig,
  EmptyGallery,
  EmptyQuerySet,
  UnknownQueryId,
  EmbedderUnavailable,
  EmbedderProtocolError,
  UnsupportedMediaType,
};

std::string_view to_string(ErrorCode code) noexcept;

// Data and validation problems map to CLI exit code 2; I/O and environment
// problems to 1.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  // Message without the "<Code>: " prefix that what() carries.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace snapdiag
