#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "snapdiag/embedder_client.hpp"
#include "snapdiag/index.hpp"

namespace snapdiag {

struct ServiceConfig {
  std::filesystem::path gallery_dir;
  std::string listen_address = "127.0.0.1:8080";
  std::size_t default_k = 10;
  std::size_t max_k = 100;
  std::optional<std::string> embedder_url;
  std::chrono::milliseconds request_timeout{10'000};
  std::size_t max_upload_bytes = 10 * 1024 * 1024;
  // When unset: image-only results if the gallery holds any image record.
  std::optional<Modality> modality_filter;
  // Static single-page UI served under "/" when set.
  std::optional<std::filesystem::path> static_dir;
};

/// Throws InvalidConfig unless 1 <= default_k <= max_k and the listen
/// address is host:port.
void validate(const ServiceConfig& config);

/// Overlays a JSON config file; keys mirror ServiceConfig with
/// request_timeout_ms for the timeout.
void apply_config_file(ServiceConfig& config, const std::filesystem::path& path);

/// Overlays SNAPDIAG_* environment variables (SNAPDIAG_GALLERY_DIR,
/// SNAPDIAG_LISTEN_ADDRESS, SNAPDIAG_DEFAULT_K, SNAPDIAG_MAX_K,
/// SNAPDIAG_EMBEDDER_URL, SNAPDIAG_REQUEST_TIMEOUT_MS,
/// SNAPDIAG_MAX_UPLOAD_BYTES, SNAPDIAG_MODALITY, SNAPDIAG_STATIC_DIR).
using EnvLookup = std::function<const char*(const char*)>;
void apply_env(ServiceConfig& config, const EnvLookup& getenv);

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ImageUpload {
  std::string content_type;
  std::string bytes;
};

/// Request handlers, independent of the HTTP stack. The gallery snapshot is
/// shared read-only by all handlers and replaced atomically by reload().
class RetrievalService {
 public:
  /// Loads config.gallery_dir; load errors propagate.
  explicit RetrievalService(ServiceConfig config);
  RetrievalService(ServiceConfig config, IndexSnapshot snapshot);

  const ServiceConfig& config() const noexcept { return config_; }
  std::shared_ptr<const IndexSnapshot> snapshot() const;

  HttpReply health() const;
  HttpReply classes() const;
  HttpReply query_vector(std::string_view json_body) const;
  HttpReply query_text(std::string_view json_body) const;
  HttpReply query_image(const ImageUpload& upload, std::optional<std::string_view> k_field) const;
  HttpReply image(std::string_view id) const;
  HttpReply reload();

 private:
  HttpReply run_query(const std::shared_ptr<const IndexSnapshot>& snap, const EmbeddingVector& vector,
                      std::size_t k, std::optional<std::set<std::string>> class_filter,
                      std::optional<double> embed_ms) const;

  ServiceConfig config_;
  std::optional<EmbedderClient> embedder_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const IndexSnapshot> snapshot_;
};

/// JSON error envelope {"error": code, "message": ..., "retriable": bool}.
HttpReply error_reply(int status, std::string_view code, std::string_view message, bool retriable = false);

/// HTTP front end (cpp-httplib) mounting the /api routes on a service.
class HttpServer {
 public:
  explicit HttpServer(RetrievalService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port; port 0 picks a free port. Returns the bound port or
  /// throws IoFailure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port". Throws InvalidConfig.
std::pair<std::string, int> parse_listen_address(std::string_view address);

}  // namespace snapdiag
