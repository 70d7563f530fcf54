#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>

#include "snapdiag/model.hpp"

namespace snapdiag {

enum class EmbedKind { Text, Image };

/// Client side of the embedder sidecar protocol:
///   POST {base}/embed/text   JSON {"text": "..."}
///   POST {base}/embed/image  multipart/form-data, part "file"
/// Both answer JSON {"vector": [...], "dim": D, "model": "..."}.
class EmbedderClient {
 public:
  EmbedderClient(std::string base_url, std::chrono::milliseconds timeout);

  /// Throws EmbedderUnavailable on connection failure, timeout or 5xx;
  /// UnsupportedMediaType when the embedder answers 415; otherwise
  /// EmbedderProtocolError for any malformed reply.
  EmbeddingVector embed_text(std::string_view text, std::size_t expected_dim) const;
  EmbeddingVector embed_image(std::string_view bytes, std::string_view content_type,
                              std::size_t expected_dim) const;

  const std::string& base_url() const noexcept { return base_url_; }

 private:
  std::string base_url_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // optional path below the origin, no trailing '/'
  std::chrono::milliseconds timeout_;
};

/// Validates an embedder reply body and re-normalizes its vector. A reply
/// whose dim or vector length differs from expected_dim, or that carries
/// non-finite or all-zero components, is an EmbedderProtocolError.
EmbeddingVector parse_embed_response(std::string_view body, std::size_t expected_dim);

/// Payload is the text for EmbedKind::Text and raw image bytes otherwise.
EmbeddingVector embed_remote(const EmbedderClient& client, EmbedKind kind, std::string_view payload,
                             std::size_t expected_dim, std::string_view content_type = "image/jpeg");

}  // namespace snapdiag
