#include "snapdiag/service.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "snapdiag/gallery.hpp"

namespace snapdiag {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  const auto d = std::chrono::steady_clock::now() - since;
  return std::round(std::chrono::duration<double, std::milli>(d).count() * 1e3) / 1e3;
}

std::optional<std::size_t> parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::size_t require_size(std::string_view s, const char* name) {
  auto v = parse_size(s);
  if (!v) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be a non-negative integer, got '" + std::string(s) + "'");
  return *v;
}

Modality require_modality(std::string_view s) {
  auto m = parse_modality(s);
  if (!m) throw Error(ErrorCode::InvalidConfig, "modality must be image or text, got '" + std::string(s) + "'");
  return *m;
}

struct BadRequest {
  int status;
  std::string code;
  std::string message;
};

// Resolves the k request parameter against the configured default and cap.
std::size_t resolve_k(const json* k, const ServiceConfig& config) {
  if (!k || k->is_null()) return config.default_k;
  if (!k->is_number_integer() || k->get<long long>() < 0) {
    throw BadRequest{400, "InvalidK", "k must be a non-negative integer"};
  }
  const auto v = k->get<unsigned long long>();
  if (v > config.max_k) {
    throw BadRequest{400, "InvalidK", "k " + std::to_string(v) + " exceeds max_k " + std::to_string(config.max_k)};
  }
  return static_cast<std::size_t>(v);
}

std::optional<std::set<std::string>> parse_class_filter(const json& body) {
  auto it = body.find("class_filter");
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw BadRequest{400, "BadRequest", "class_filter must be a list of strings"};
  std::set<std::string> out;
  for (const auto& c : *it) {
    if (!c.is_string()) throw BadRequest{400, "BadRequest", "class_filter must be a list of strings"};
    out.insert(c.get<std::string>());
  }
  return out;
}

json parse_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw BadRequest{400, "BadRequest", "request body is not valid JSON"};
  }
  if (!j.is_object()) throw BadRequest{400, "BadRequest", "request body must be a JSON object"};
  return j;
}

HttpReply reply_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::DimensionMismatch:
      return error_reply(400, "DimensionMismatch", e.detail());
    case ErrorCode::DegenerateVector:
      return error_reply(422, "DegenerateVector", e.detail());
    case ErrorCode::NonFiniteValue:
      return error_reply(400, "NonFiniteValue", e.detail());
    case ErrorCode::EmbedderUnavailable:
      return error_reply(503, "EmbedderUnavailable", e.detail(), true);
    case ErrorCode::EmbedderProtocolError:
      return error_reply(502, "EmbedderProtocolError", e.detail());
    case ErrorCode::UnsupportedMediaType:
      return error_reply(415, "UnsupportedMediaType", e.detail());
    default:
      return error_reply(500, to_string(e.code()), e.detail());
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string content_type_for(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "application/octet-stream";
}

std::optional<Modality> effective_modality(const ServiceConfig& config, const IndexSnapshot& snap) {
  if (config.modality_filter) return config.modality_filter;
  if (snap.has_modality(Modality::Image)) return Modality::Image;
  return std::nullopt;
}

}  // namespace

HttpReply error_reply(int status, std::string_view code, std::string_view message, bool retriable) {
  json j;
  j["error"] = code;
  j["message"] = message;
  j["retriable"] = retriable;
  return {status, j.dump(), "application/json"};
}

std::pair<std::string, int> parse_listen_address(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::InvalidConfig, "listen address must be host:port, got '" + std::string(address) + "'");
  }
  auto port = parse_size(address.substr(colon + 1));
  if (!port || *port > 65535) {
    throw Error(ErrorCode::InvalidConfig, "invalid port in listen address '" + std::string(address) + "'");
  }
  return {std::string(address.substr(0, colon)), static_cast<int>(*port)};
}

void validate(const ServiceConfig& config) {
  if (config.default_k < 1 || config.default_k > config.max_k) {
    throw Error(ErrorCode::InvalidConfig, "need 1 <= default_k <= max_k, got default_k " +
                                              std::to_string(config.default_k) + ", max_k " + std::to_string(config.max_k));
  }
  parse_listen_address(config.listen_address);
  if (config.request_timeout.count() <= 0) throw Error(ErrorCode::InvalidConfig, "request_timeout must be positive");
}

void apply_config_file(ServiceConfig& config, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  try {
    if (j.contains("gallery_dir")) config.gallery_dir = j["gallery_dir"].get<std::string>();
    if (j.contains("listen_address")) config.listen_address = j["listen_address"].get<std::string>();
    if (j.contains("default_k")) config.default_k = j["default_k"].get<std::size_t>();
    if (j.contains("max_k")) config.max_k = j["max_k"].get<std::size_t>();
    if (j.contains("embedder_url") && !j["embedder_url"].is_null()) config.embedder_url = j["embedder_url"].get<std::string>();
    if (j.contains("request_timeout_ms")) config.request_timeout = std::chrono::milliseconds(j["request_timeout_ms"].get<long long>());
    if (j.contains("max_upload_bytes")) config.max_upload_bytes = j["max_upload_bytes"].get<std::size_t>();
    if (j.contains("modality_filter") && !j["modality_filter"].is_null()) {
      config.modality_filter = require_modality(j["modality_filter"].get<std::string>());
    }
    if (j.contains("static_dir") && !j["static_dir"].is_null()) config.static_dir = j["static_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

void apply_env(ServiceConfig& config, const EnvLookup& getenv) {
  if (const char* v = getenv("SNAPDIAG_GALLERY_DIR")) config.gallery_dir = v;
  if (const char* v = getenv("SNAPDIAG_LISTEN_ADDRESS")) config.listen_address = v;
  if (const char* v = getenv("SNAPDIAG_DEFAULT_K")) config.default_k = require_size(v, "SNAPDIAG_DEFAULT_K");
  if (const char* v = getenv("SNAPDIAG_MAX_K")) config.max_k = require_size(v, "SNAPDIAG_MAX_K");
  if (const char* v = getenv("SNAPDIAG_EMBEDDER_URL")) config.embedder_url = v;
  if (const char* v = getenv("SNAPDIAG_REQUEST_TIMEOUT_MS")) {
    config.request_timeout = std::chrono::milliseconds(require_size(v, "SNAPDIAG_REQUEST_TIMEOUT_MS"));
  }
  if (const char* v = getenv("SNAPDIAG_MAX_UPLOAD_BYTES")) config.max_upload_bytes = require_size(v, "SNAPDIAG_MAX_UPLOAD_BYTES");
  if (const char* v = getenv("SNAPDIAG_MODALITY")) config.modality_filter = require_modality(v);
  if (const char* v = getenv("SNAPDIAG_STATIC_DIR")) config.static_dir = v;
}

RetrievalService::RetrievalService(ServiceConfig config)
    : RetrievalService(config, load_gallery(config.gallery_dir)) {}

RetrievalService::RetrievalService(ServiceConfig config, IndexSnapshot snapshot)
    : config_(std::move(config)), snapshot_(std::make_shared<const IndexSnapshot>(std::move(snapshot))) {
  validate(config_);
  if (config_.embedder_url) embedder_.emplace(*config_.embedder_url, config_.request_timeout);
}

std::shared_ptr<const IndexSnapshot> RetrievalService::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

HttpReply RetrievalService::health() const {
  const auto snap = snapshot();
  json j;
  j["status"] = "ok";
  j["gallery_size"] = snap->count();
  j["dim"] = snap->dim();
  j["default_k"] = config_.default_k;
  j["max_k"] = config_.max_k;
  j["embedder"] = embedder_.has_value();
  return {200, j.dump()};
}

HttpReply RetrievalService::classes() const {
  const auto snap = snapshot();
  json list = json::array();
  for (std::size_t c = 0; c < snap->class_labels().size(); ++c) {
    list.push_back({{"label", snap->class_labels()[c]}, {"count", snap->class_counts()[c]}});
  }
  json j;
  j["classes"] = std::move(list);
  return {200, j.dump()};
}

HttpReply RetrievalService::run_query(const std::shared_ptr<const IndexSnapshot>& snap, const EmbeddingVector& vector,
                                      std::size_t k, std::optional<std::set<std::string>> class_filter,
                                      std::optional<double> embed_ms) const {
  const auto started = std::chrono::steady_clock::now();
  QuerySpec spec{vector, k, std::nullopt, std::move(class_filter), effective_modality(config_, *snap)};
  const auto hits = search(*snap, spec);
  const auto candidates = aggregate_candidates(hits);
  const double search_ms = elapsed_ms(started);

  json results = json::array();
  for (const auto& hit : hits) {
    const auto& rec = snap->record(*snap->find_row(hit.record_id));
    json r;
    r["id"] = hit.record_id;
    r["class"] = hit.class_label;
    r["score"] = round4(hit.score);
    r["uri"] = rec.uri;
    r["rank"] = hit.rank;
    r["caption"] = rec.caption ? json(*rec.caption) : json(nullptr);
    results.push_back(std::move(r));
  }
  json cands = json::array();
  for (const auto& c : candidates) {
    cands.push_back({{"class", c.class_label}, {"score", round4(c.score)}, {"support", c.support}});
  }
  json j;
  j["results"] = std::move(results);
  j["candidates"] = std::move(cands);
  j["timing"] = json::object();
  if (embed_ms) j["timing"]["embed_ms"] = *embed_ms;
  j["timing"]["search_ms"] = search_ms;
  j["gallery_count"] = snap->count();
  return {200, j.dump()};
}

HttpReply RetrievalService::query_vector(std::string_view json_body) const {
  try {
    const auto body = parse_body(json_body);
    auto it = body.find("vector");
    if (it == body.end() || !it->is_array()) throw BadRequest{400, "BadRequest", "'vector' must be a list of numbers"};
    std::vector<float> raw;
    raw.reserve(it->size());
    for (const auto& x : *it) {
      if (!x.is_number()) throw BadRequest{400, "BadRequest", "'vector' must be a list of numbers"};
      raw.push_back(x.get<float>());
    }
    const std::size_t k = resolve_k(body.contains("k") ? &body["k"] : nullptr, config_);
    auto filter = parse_class_filter(body);
    const auto snap = snapshot();
    const auto vec = normalize(raw, snap->dim());
    return run_query(snap, vec, k, std::move(filter), std::nullopt);
  } catch (const BadRequest& e) {
    return error_reply(e.status, e.code, e.message);
  } catch (const Error& e) {
    return reply_for(e);
  }
}

HttpReply RetrievalService::query_text(std::string_view json_body) const {
  try {
    const auto body = parse_body(json_body);
    auto it = body.find("text");
    if (it == body.end() || !it->is_string()) throw BadRequest{400, "BadRequest", "'text' must be a string"};
    const std::string text = trim(it->get<std::string>());
    if (text.empty()) throw BadRequest{400, "EmptyText", "query text is empty"};
    const std::size_t k = resolve_k(body.contains("k") ? &body["k"] : nullptr, config_);
    auto filter = parse_class_filter(body);
    if (!embedder_) return error_reply(503, "EmbedderUnavailable", "no embedder_url configured");

    const auto snap = snapshot();
    const auto started = std::chrono::steady_clock::now();
    const auto vec = embed_remote(*embedder_, EmbedKind::Text, text, snap->dim());
    return run_query(snap, vec, k, std::move(filter), elapsed_ms(started));
  } catch (const BadRequest& e) {
    return error_reply(e.status, e.code, e.message);
  } catch (const Error& e) {
    return reply_for(e);
  }
}

HttpReply RetrievalService::query_image(const ImageUpload& upload, std::optional<std::string_view> k_field) const {
  try {
    if (upload.bytes.size() > config_.max_upload_bytes) {
      return error_reply(413, "PayloadTooLarge", "upload of " + std::to_string(upload.bytes.size()) +
                                                     " bytes exceeds the " + std::to_string(config_.max_upload_bytes) +
                                                     "-byte limit");
    }
    const auto semi = upload.content_type.find(';');
    const std::string media = trim(upload.content_type.substr(0, semi));
    if (media != "image/jpeg" && media != "image/png") {
      return error_reply(415, "UnsupportedMediaType", "expected image/jpeg or image/png, got '" + media + "'");
    }
    if (upload.bytes.empty()) return error_reply(400, "BadRequest", "empty upload");
    std::size_t k = config_.default_k;
    if (k_field) {
      const auto parsed = parse_size(trim(*k_field));
      if (!parsed) throw BadRequest{400, "InvalidK", "k must be a non-negative integer"};
      json kj = *parsed;
      k = resolve_k(&kj, config_);
    }
    if (!embedder_) return error_reply(503, "EmbedderUnavailable", "no embedder_url configured");

    const auto snap = snapshot();
    const auto started = std::chrono::steady_clock::now();
    const auto vec = embed_remote(*embedder_, EmbedKind::Image, upload.bytes, snap->dim(), media);
    return run_query(snap, vec, k, std::nullopt, elapsed_ms(started));
  } catch (const BadRequest& e) {
    return error_reply(e.status, e.code, e.message);
  } catch (const Error& e) {
    return reply_for(e);
  }
}

HttpReply RetrievalService::image(std::string_view id) const {
  const auto snap = snapshot();
  const auto row = snap->find_row(id);
  if (!row) return error_reply(404, "NotFound", "no record with id '" + std::string(id) + "'");
  std::string uri = snap->record(*row).uri;
  if (uri.rfind("file://", 0) == 0) {
    uri.erase(0, 7);
  } else if (uri.find("://") != std::string::npos) {
    return error_reply(404, "NotFound", "asset for '" + std::string(id) + "' is not a local file");
  }
  fs::path path(uri);
  if (path.is_relative()) path = config_.gallery_dir / path;
  std::ifstream in(path, std::ios::binary);
  if (!in) return error_reply(404, "NotFound", "asset for '" + std::string(id) + "' is missing");
  std::ostringstream buf;
  buf << in.rdbuf();
  return {200, std::move(buf).str(), content_type_for(path)};
}

HttpReply RetrievalService::reload() {
  try {
    auto fresh = std::make_shared<const IndexSnapshot>(load_gallery(config_.gallery_dir));
    const std::size_t n = fresh->count();
    {
      std::lock_guard lock(snapshot_mutex_);
      snapshot_ = std::move(fresh);
    }
    json j;
    j["status"] = "reloaded";
    j["gallery_size"] = n;
    return {200, j.dump()};
  } catch (const Error& e) {
    return error_reply(500, to_string(e.code()), e.detail());
  }
}

struct HttpServer::Impl {
  RetrievalService& service;
  httplib::Server server;

  explicit Impl(RetrievalService& s) : service(s) {}
};

static void send(httplib::Response& res, const HttpReply& reply) {
  res.status = reply.status;
  res.set_content(reply.body, reply.content_type);
}

HttpServer::HttpServer(RetrievalService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  const auto& cfg = svc.config();

  // Leaves headroom for multipart framing around a maximal upload; the exact
  // limit is enforced on the file part itself.
  srv.set_payload_max_length(cfg.max_upload_bytes + 64 * 1024);
  srv.set_read_timeout(cfg.request_timeout);
  srv.set_write_timeout(cfg.request_timeout);

  srv.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.health()); });
  srv.Get("/api/classes", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.classes()); });
  srv.Post("/api/query/vector",
           [&svc](const httplib::Request& req, httplib::Response& res) { send(res, svc.query_vector(req.body)); });
  srv.Post("/api/query/text",
           [&svc](const httplib::Request& req, httplib::Response& res) { send(res, svc.query_text(req.body)); });
  srv.Post("/api/query/image", [&svc](const httplib::Request& req, httplib::Response& res) {
    ImageUpload upload;
    std::optional<std::string> k;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) {
        send(res, error_reply(400, "BadRequest", "multipart upload lacks a 'file' part"));
        return;
      }
      const auto file = req.get_file_value("file");
      upload.content_type = file.content_type;
      upload.bytes = file.content;
      if (req.has_file("k")) k = req.get_file_value("k").content;
    } else {
      upload.content_type = req.get_header_value("Content-Type");
      upload.bytes = req.body;
    }
    if (!k && req.has_param("k")) k = req.get_param_value("k");
    send(res, svc.query_image(upload, k ? std::optional<std::string_view>(*k) : std::nullopt));
  });
  srv.Get(R"(/api/image/(.+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.image(req.matches[1].str()));
  });
  srv.Post("/api/admin/reload",
           [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.reload()); });

  if (cfg.static_dir) srv.set_mount_point("/", cfg.static_dir->string());

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    switch (res.status) {
      case 413: send(res, error_reply(413, "PayloadTooLarge", "request body exceeds the upload limit")); break;
      case 404: send(res, error_reply(404, "NotFound", "no such endpoint")); break;
      default: send(res, error_reply(res.status, "HttpError", "HTTP " + std::to_string(res.status))); break;
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace snapdiag
