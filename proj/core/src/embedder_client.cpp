#include "snapdiag/embedder_client.hpp"

#include <cmath>

#include "httplib.h"
#include "json.hpp"

namespace snapdiag {

namespace {

[[noreturn]] void protocol_error(const std::string& what) {
  throw Error(ErrorCode::EmbedderProtocolError, what);
}

}  // namespace

EmbedderClient::EmbedderClient(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  const auto scheme_end = base_url_.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = base_url_.find('/', host_start);
  origin_ = base_url_.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = base_url_.substr(path_start);
  if (scheme_end == std::string::npos) origin_ = "http://" + origin_;
}

EmbeddingVector parse_embed_response(std::string_view body, std::size_t expected_dim) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("reply is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("vector") || !j["vector"].is_array()) protocol_error("reply lacks a 'vector' array");
  if (!j.contains("dim") || !j["dim"].is_number_integer()) protocol_error("reply lacks an integer 'dim'");
  if (!j.contains("model") || !j["model"].is_string()) protocol_error("reply lacks a string 'model'");

  const auto& arr = j["vector"];
  const auto declared = j["dim"].get<long long>();
  if (declared < 0 || static_cast<std::size_t>(declared) != arr.size()) {
    protocol_error("reply declares dim " + std::to_string(declared) + " but carries " + std::to_string(arr.size()) + " components");
  }
  if (arr.size() != expected_dim) {
    protocol_error("embedder dim " + std::to_string(arr.size()) + " does not match gallery dim " + std::to_string(expected_dim));
  }
  std::vector<float> raw;
  raw.reserve(arr.size());
  for (const auto& x : arr) {
    if (!x.is_number()) protocol_error("vector components must be numbers");
    const double v = x.get<double>();
    if (!std::isfinite(v) || !std::isfinite(static_cast<float>(v))) protocol_error("vector has non-finite components");
    raw.push_back(static_cast<float>(v));
  }
  try {
    return normalize(raw, expected_dim);
  } catch (const Error& e) {
    protocol_error(std::string("unusable vector: ") + e.what());
  }
}

static void check_status(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw Error(ErrorCode::EmbedderUnavailable, what + ": " + httplib::to_string(res.error()));
  }
  if (res->status == 415) throw Error(ErrorCode::UnsupportedMediaType, what + ": embedder rejected the payload");
  if (res->status >= 500) {
    throw Error(ErrorCode::EmbedderUnavailable, what + ": embedder answered HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::EmbedderProtocolError, what + ": embedder answered HTTP " + std::to_string(res->status));
  }
}

EmbeddingVector EmbedderClient::embed_text(std::string_view text, std::size_t expected_dim) const {
  httplib::Client cli(origin_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  const std::string body = nlohmann::json{{"text", std::string(text)}}.dump();
  auto res = cli.Post(path_prefix_ + "/embed/text", body, "application/json");
  check_status(res, "POST " + base_url_ + "/embed/text");
  return parse_embed_response(res->body, expected_dim);
}

EmbeddingVector EmbedderClient::embed_image(std::string_view bytes, std::string_view content_type,
                                            std::size_t expected_dim) const {
  httplib::Client cli(origin_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  const std::string filename = content_type == "image/png" ? "upload.png" : "upload.jpg";
  httplib::MultipartFormDataItems items = {
      {"file", std::string(bytes), filename, std::string(content_type)},
  };
  auto res = cli.Post(path_prefix_ + "/embed/image", items);
  check_status(res, "POST " + base_url_ + "/embed/image");
  return parse_embed_response(res->body, expected_dim);
}

EmbeddingVector embed_remote(const EmbedderClient& client, EmbedKind kind, std::string_view payload,
                             std::size_t expected_dim, std::string_view content_type) {
  return kind == EmbedKind::Text ? client.embed_text(payload, expected_dim)
                                 : client.embed_image(payload, content_type, expected_dim);
}

}  // namespace snapdiag
