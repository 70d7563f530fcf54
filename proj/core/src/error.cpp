#include "snapdiag/error.hpp"

namespace snapdiag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::NormViolation: return "NormViolation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ManifestGap: return "ManifestGap";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::MissingVector: return "MissingVector";
    case ErrorCode::DuplicateVector: return "DuplicateVector";
    case ErrorCode::UnknownVector: return "UnknownVector";
    case ErrorCode::InvalidRelevance: return "InvalidRelevance";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
    case ErrorCode::EmptyQuerySet: return "EmptyQuerySet";
    case ErrorCode::UnknownQueryId: return "UnknownQueryId";
    case ErrorCode::EmbedderUnavailable: return "EmbedderUnavailable";
    case ErrorCode::EmbedderProtocolError: return "EmbedderProtocolError";
    case ErrorCode::UnsupportedMediaType: return "UnsupportedMediaType";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IoFailure:
    case ErrorCode::EmbedderUnavailable:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      detail_(message) {}

}  // namespace snapdiag
