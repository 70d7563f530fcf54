#include "cli.hpp"

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "snapdiag/embedder_client.hpp"
#include "snapdiag/eval.hpp"
#include "snapdiag/gallery.hpp"
#include "snapdiag/service.hpp"
#include "snapdiag/synth.hpp"

namespace snapdiag::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

// A JSON array, a JSON object with a "vector" array, or whitespace/comma
// separated numbers.
std::vector<float> read_vector_file(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<float> out;
  if (auto j = nlohmann::json::parse(text, nullptr, false); !j.is_discarded()) {
    const auto& arr = j.is_object() && j.contains("vector") ? j["vector"] : j;
    if (!arr.is_array()) throw Error(ErrorCode::InvariantViolation, path.string() + ": expected a list of numbers");
    for (const auto& x : arr) {
      if (!x.is_number()) throw Error(ErrorCode::InvariantViolation, path.string() + ": expected a list of numbers");
      out.push_back(x.get<float>());
    }
    return out;
  }
  std::string cleaned = text;
  for (auto& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::istringstream is(cleaned);
  std::string tok;
  while (is >> tok) {
    char* end = nullptr;
    const float v = std::strtof(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw Error(ErrorCode::InvariantViolation, path.string() + ": '" + tok + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    char* end = nullptr;
    const long v = std::strtol(part.c_str(), &end, 10);
    if (part.empty() || *end != '\0' || v <= 0) throw UsageError("--k expects positive integers like 1,5,10");
    ks.push_back(static_cast<std::size_t>(v));
  }
  for (std::size_t i = 1; i < ks.size(); ++i) {
    if (ks[i] <= ks[i - 1]) throw UsageError("--k values must be strictly increasing");
  }
  if (ks.empty()) throw UsageError("--k expects at least one value");
  return ks;
}

std::optional<Modality> parse_modality_flag(const std::string& s) {
  if (s.empty() || s == "any") return std::nullopt;
  if (auto m = parse_modality(s)) return m;
  throw UsageError("--modality expects image, text or any");
}

std::string media_type_for(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" ? "image/png" : "image/jpeg";
}

int report_error(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << '\n';
  return is_validation_error(e.code()) ? kExitData : kExitIo;
}

// --- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::string manifest, raw, out;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto raw = read_raw_vectors(a.raw);
    const auto report = ingest_raw(a.manifest, raw, a.out);
    out << format_report(report);
    out << "wrote " << a.out << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

// --- validate ---------------------------------------------------------------

int cmd_validate(const std::string& gallery, std::ostream& out, std::ostream& err) {
  try {
    out << format_report(summarize(load_gallery(gallery)));
    out << "ok\n";
    return kExitOk;
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string config_file;
  std::string gallery, listen, embedder, modality, static_dir;
  std::optional<std::size_t> default_k, max_k, max_upload_bytes;
  std::optional<long long> timeout_ms;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  ServiceConfig config;
  try {
    if (!a.config_file.empty()) apply_config_file(config, a.config_file);
    apply_env(config, [](const char* name) { return std::getenv(name); });
    if (!a.gallery.empty()) config.gallery_dir = a.gallery;
    if (!a.listen.empty()) config.listen_address = a.listen;
    if (!a.embedder.empty()) config.embedder_url = a.embedder;
    if (!a.modality.empty()) config.modality_filter = parse_modality_flag(a.modality);
    if (!a.static_dir.empty()) config.static_dir = a.static_dir;
    if (a.default_k) config.default_k = *a.default_k;
    if (a.max_k) config.max_k = *a.max_k;
    if (a.max_upload_bytes) config.max_upload_bytes = *a.max_upload_bytes;
    if (a.timeout_ms) config.request_timeout = std::chrono::milliseconds(*a.timeout_ms);
    if (config.gallery_dir.empty()) throw UsageError("serve needs --gallery (or SNAPDIAG_GALLERY_DIR)");
    validate(config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::IoFailure ? kExitIo : kExitUsage;
  }

  try {
    RetrievalService service(config);
    HttpServer server(service);
    const auto [host, port] = parse_listen_address(config.listen_address);

    // Route SIGINT/SIGTERM to a watcher thread that stops the server.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const int bound = server.bind(host, port);
    const auto snap = service.snapshot();
    out << "serving " << snap->count() << " records (dim " << snap->dim() << ") on " << host << ':' << bound << '\n'
        << std::flush;

    std::jthread watcher([&server, signals] {
      int sig = 0;
      sigwait(&signals, &sig);
      server.stop();
    });
    server.serve();
    pthread_kill(watcher.native_handle(), SIGTERM);
    return kExitOk;
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

// --- query ------------------------------------------------------------------

struct QueryArgs {
  std::string gallery, vector_file, text, image, embedder, modality;
  std::size_t k = 10;
  std::vector<std::string> classes;
  long long timeout_ms = 10'000;
};

int cmd_query(const QueryArgs& a, std::ostream& out, std::ostream& err) {
  const int modes = !a.vector_file.empty() + !a.text.empty() + !a.image.empty();
  if (modes != 1) {
    err << "error: give exactly one of --vector, --text, --image\n";
    return kExitUsage;
  }
  if ((!a.text.empty() || !a.image.empty()) && a.embedder.empty()) {
    err << "error: --text and --image require --embedder URL\n";
    return kExitUsage;
  }
  std::optional<Modality> modality;
  try {
    modality = parse_modality_flag(a.modality);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const auto snapshot = load_gallery(a.gallery);
    std::optional<EmbeddingVector> vec;
    if (!a.vector_file.empty()) {
      vec = normalize(read_vector_file(a.vector_file), snapshot.dim());
    } else {
      const EmbedderClient client(a.embedder, std::chrono::milliseconds(a.timeout_ms));
      if (!a.text.empty()) {
        vec = embed_remote(client, EmbedKind::Text, a.text, snapshot.dim());
      } else {
        vec = embed_remote(client, EmbedKind::Image, read_text(a.image), snapshot.dim(), media_type_for(a.image));
      }
    }
    if (!modality && snapshot.has_modality(Modality::Image)) modality = Modality::Image;

    QuerySpec spec{*vec, a.k, std::nullopt, std::nullopt, modality};
    if (!a.classes.empty()) spec.class_filter = std::set<std::string>(a.classes.begin(), a.classes.end());
    const auto hits = search(snapshot, spec);

    char score[32];
    out << "rank\tid\tclass\tscore\n";
    for (const auto& h : hits) {
      std::snprintf(score, sizeof score, "%.4f", h.score);
      out << h.rank << '\t' << h.record_id << '\t' << h.class_label << '\t' << score << '\n';
    }
    out << "\ncandidate\tclass\tscore\tsupport\n";
    std::size_t i = 0;
    for (const auto& c : aggregate_candidates(hits)) {
      std::snprintf(score, sizeof score, "%.4f", c.score);
      out << ++i << '\t' << c.class_label << '\t' << score << '\t' << c.support << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (e.code() == ErrorCode::IoFailure) return kExitIo;
    return kExitData;
  }
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string gallery, queries, k = "1,5,10", protocol, modality, out, method = "snapdiag";
  std::optional<std::size_t> ap_cutoff;
  unsigned threads = 0;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  EvalConfig config;
  try {
    config.k_values = parse_k_list(a.k);
    config.modality_filter = parse_modality_flag(a.modality);
    config.ap_cutoff = a.ap_cutoff;
    config.threads = a.threads;
    if (a.protocol.empty()) {
      config.protocol = a.queries.empty() ? EvalProtocol::LeaveOneOut : EvalProtocol::HeldOut;
    } else if (a.protocol == "leave_one_out") {
      config.protocol = EvalProtocol::LeaveOneOut;
    } else if (a.protocol == "held_out") {
      config.protocol = EvalProtocol::HeldOut;
    } else {
      throw UsageError("--protocol expects leave_one_out or held_out");
    }
    if (a.queries.empty() && config.protocol == EvalProtocol::HeldOut) {
      throw UsageError("held_out protocol needs --queries");
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const auto gallery = load_gallery(a.gallery);
    std::vector<EvalQuery> queries;
    if (a.queries.empty()) {
      queries = queries_from_gallery(gallery);
    } else {
      queries = queries_from_gallery(load_gallery(a.queries));
    }
    const auto report = evaluate(gallery, queries, config);
    out << format_table(report, a.method);
    if (!a.out.empty()) {
      std::ofstream f(a.out, std::ios::trunc);
      f << report_to_json(report) << '\n';
      if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + a.out);
    }
    return kExitOk;
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

// --- synth ------------------------------------------------------------------

int cmd_synth(const SynthConfig& config, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  try {
    const auto snapshot = synthesize_gallery(config);
    write_gallery(snapshot, out_dir);
    out << "wrote " << snapshot.count() << " records, " << snapshot.class_labels().size() << " classes, dim "
        << snapshot.dim() << " to " << out_dir << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::IoFailure ? kExitIo : kExitUsage;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"snapdiag: cross-modal plant-disease retrieval over precomputed embeddings"};
  app.require_subcommand(1, 1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Normalize raw embeddings and write a gallery");
  ingest_cmd->add_option("--manifest", ingest.manifest, "Manifest JSONL (id, class, modality, uri, caption)")->required();
  ingest_cmd->add_option("--raw", ingest.raw, "Raw vectors JSONL of {\"id\", \"vector\"}")->required();
  ingest_cmd->add_option("--out", ingest.out, "Output gallery directory")->required();

  std::string validate_gallery;
  auto* validate_cmd = app.add_subcommand("validate", "Load a gallery and print its summary");
  validate_cmd->add_option("--gallery", validate_gallery, "Gallery directory")->required();

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP retrieval service");
  serve_cmd->add_option("--config", serve.config_file, "JSON config file");
  serve_cmd->add_option("--gallery", serve.gallery, "Gallery directory");
  serve_cmd->add_option("--listen", serve.listen, "host:port");
  serve_cmd->add_option("--embedder", serve.embedder, "Embedder base URL");
  serve_cmd->add_option("--default-k", serve.default_k);
  serve_cmd->add_option("--max-k", serve.max_k);
  serve_cmd->add_option("--timeout-ms", serve.timeout_ms, "Embedder request timeout");
  serve_cmd->add_option("--max-upload-bytes", serve.max_upload_bytes);
  serve_cmd->add_option("--modality", serve.modality, "Restrict results to image|text|any");
  serve_cmd->add_option("--static-dir", serve.static_dir, "Serve a UI from this directory under /");

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Rank gallery records against one query");
  query_cmd->add_option("--gallery", query.gallery, "Gallery directory")->required();
  query_cmd->add_option("--vector", query.vector_file, "File holding the query vector");
  query_cmd->add_option("--text", query.text, "Symptom description (needs --embedder)");
  query_cmd->add_option("--image", query.image, "Image file (needs --embedder)");
  query_cmd->add_option("--embedder", query.embedder, "Embedder base URL");
  query_cmd->add_option("--k", query.k, "Number of results")->capture_default_str();
  query_cmd->add_option("--class", query.classes, "Restrict results to these classes");
  query_cmd->add_option("--modality", query.modality, "Restrict results to image|text|any");
  query_cmd->add_option("--timeout-ms", query.timeout_ms)->capture_default_str();

  EvaluateArgs evaluate_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Top-k accuracy and mAP over a labeled query set");
  eval_cmd->add_option("--gallery", evaluate_args.gallery, "Gallery directory")->required();
  eval_cmd->add_option("--queries", evaluate_args.queries, "Query gallery directory (default: leave-one-out)");
  eval_cmd->add_option("--k", evaluate_args.k, "Comma-separated k values")->capture_default_str();
  eval_cmd->add_option("--protocol", evaluate_args.protocol, "leave_one_out | held_out");
  eval_cmd->add_option("--ap-cutoff", evaluate_args.ap_cutoff, "Truncate rankings for AP");
  eval_cmd->add_option("--modality", evaluate_args.modality, "Restrict gallery candidates to image|text|any");
  eval_cmd->add_option("--out", evaluate_args.out, "Write the JSON report here");
  eval_cmd->add_option("--method", evaluate_args.method, "Row label in the table")->capture_default_str();
  eval_cmd->add_option("--threads", evaluate_args.threads, "Worker threads (0: all cores)");

  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a reproducible class-separable gallery");
  synth_cmd->add_option("--classes", synth.classes)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--per-class", synth.per_class)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim)->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output gallery directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front()) err << sub->help();
    return kExitUsage;
  }

  try {
    if (ingest_cmd->parsed()) return cmd_ingest(ingest, out, err);
    if (validate_cmd->parsed()) return cmd_validate(validate_gallery, out, err);
    if (serve_cmd->parsed()) return cmd_serve(serve, out, err);
    if (query_cmd->parsed()) return cmd_query(query, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(evaluate_args, out, err);
    if (synth_cmd->parsed()) return cmd_synth(synth, synth_out, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace snapdiag::cli
