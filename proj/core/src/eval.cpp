#include "snapdiag/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "parallel.hpp"

namespace snapdiag {

std::string_view to_string(EvalProtocol p) noexcept {
  return p == EvalProtocol::LeaveOneOut ? "leave_one_out" : "held_out";
}

double average_precision(const std::vector<bool>& relevance, std::size_t total_relevant) {
  const auto observed = static_cast<std::size_t>(std::count(relevance.begin(), relevance.end(), true));
  if (total_relevant == 0 || total_relevant < observed) {
    throw Error(ErrorCode::InvalidRelevance, "total_relevant " + std::to_string(total_relevant) + " with " +
                                                 std::to_string(observed) + " relevant items in the ranking");
  }
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(total_relevant);
}

bool top_k_hit(std::span<const RankedHit> hits, std::string_view query_class, std::size_t k) {
  const std::size_t n = std::min(k, hits.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i].class_label == query_class) return true;
  }
  return false;
}

std::vector<EvalQuery> queries_from_gallery(const IndexSnapshot& snapshot) {
  std::vector<EvalQuery> out;
  out.reserve(snapshot.count());
  for (std::size_t r = 0; r < snapshot.count(); ++r) {
    const auto& rec = snapshot.record(r);
    auto row = snapshot.row(r);
    out.push_back({EmbeddingVector::from_unit({row.begin(), row.end()}), rec.class_label, rec.id, rec.modality});
  }
  return out;
}

namespace {

constexpr std::size_t kNoRelevant = std::numeric_limits<std::size_t>::max();

struct QueryOutcome {
  bool skipped = false;
  std::size_t first_relevant_rank = kNoRelevant;  // 1-based
  double ap = 0.0;
};

void validate_config(const EvalConfig& config) {
  if (config.k_values.empty()) throw Error(ErrorCode::InvalidConfig, "k_values must not be empty");
  for (std::size_t i = 0; i < config.k_values.size(); ++i) {
    if (config.k_values[i] == 0 || (i > 0 && config.k_values[i] <= config.k_values[i - 1])) {
      throw Error(ErrorCode::InvalidConfig, "k_values must be positive and strictly increasing");
    }
  }
  if (config.ap_cutoff && *config.ap_cutoff == 0) throw Error(ErrorCode::InvalidConfig, "ap_cutoff must be positive");
}

// Order-independent sum: add the terms in sorted order.
double canonical_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

}  // namespace

EvalReport evaluate(const IndexSnapshot& snapshot, std::span<const EvalQuery> queries, const EvalConfig& config) {
  validate_config(config);
  if (snapshot.empty()) throw Error(ErrorCode::EmptyGallery, "gallery has no records");
  if (queries.empty()) throw Error(ErrorCode::EmptyQuerySet, "no queries to evaluate");

  const bool loo = config.protocol == EvalProtocol::LeaveOneOut;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    if (q.vector.dim() != snapshot.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "query " + std::to_string(i) + " has dim " +
                                                    std::to_string(q.vector.dim()) + ", gallery expects " +
                                                    std::to_string(snapshot.dim()));
    }
    if (loo && (!q.id || !snapshot.find_row(*q.id))) {
      throw Error(ErrorCode::UnknownQueryId,
                  "query " + std::to_string(i) + (q.id ? " ('" + *q.id + "')" : std::string(" (no id)")) +
                      " is not a gallery record");
    }
  }

  const std::size_t depth = config.ap_cutoff ? std::max(*config.ap_cutoff, config.k_values.back()) : snapshot.count();

  std::vector<QueryOutcome> outcomes(queries.size());
  detail::parallel_for(queries.size(), config.threads == 0 ? default_worker_count() : config.threads,
                       [&](std::size_t i) {
    const auto& q = queries[i];
    const auto cls = snapshot.find_class(q.class_label);
    const std::optional<std::size_t> self = loo ? snapshot.find_row(*q.id) : std::nullopt;

    std::size_t total_relevant = 0;
    if (cls) {
      for (std::size_t r = 0; r < snapshot.count(); ++r) {
        if (snapshot.class_index(r) != *cls || (self && *self == r)) continue;
        if (config.modality_filter && snapshot.record(r).modality != *config.modality_filter) continue;
        ++total_relevant;
      }
    }
    auto& out = outcomes[i];
    if (total_relevant == 0) {
      out.skipped = true;
      return;
    }

    QuerySpec spec{q.vector, depth, loo ? q.id : std::nullopt, std::nullopt, config.modality_filter};
    const auto ranked = rank_rows(snapshot, spec);
    const std::size_t ap_depth = config.ap_cutoff ? std::min(*config.ap_cutoff, ranked.size()) : ranked.size();
    std::vector<bool> relevance(ap_depth);
    for (std::size_t j = 0; j < ranked.size(); ++j) {
      const bool rel = snapshot.class_index(ranked[j].row) == *cls;
      if (rel && out.first_relevant_rank == kNoRelevant) out.first_relevant_rank = j + 1;
      if (j < ap_depth) relevance[j] = rel;
    }
    out.ap = average_precision(relevance, total_relevant);
  });

  EvalReport report;
  report.gallery_count = snapshot.count();
  report.protocol = config.protocol;
  report.ap_cutoff = config.ap_cutoff;

  std::vector<double> aps;
  std::map<std::string, std::vector<double>> aps_by_class;
  std::map<std::size_t, std::size_t> hits_at;
  for (std::size_t k : config.k_values) hits_at[k] = 0;

  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    ++report.query_modalities[q.modality ? std::string(to_string(*q.modality)) : std::string("unknown")];
    const auto& o = outcomes[i];
    if (o.skipped) {
      ++report.skipped_count;
      continue;
    }
    ++report.query_count;
    aps.push_back(o.ap);
    aps_by_class[q.class_label].push_back(o.ap);
    for (auto& [k, n] : hits_at) {
      if (o.first_relevant_rank <= k) ++n;
    }
  }
  if (report.query_count == 0) {
    throw Error(ErrorCode::EmptyQuerySet, "all " + std::to_string(report.skipped_count) +
                                              " queries were skipped: no relevant gallery items");
  }

  const double n = static_cast<double>(report.query_count);
  for (const auto& [k, hits] : hits_at) report.top_k_accuracy[k] = 100.0 * static_cast<double>(hits) / n;
  report.mean_ap = 100.0 * canonical_sum(aps) / n;
  for (auto& [label, values] : aps_by_class) {
    const double m = static_cast<double>(values.size());
    report.per_class_ap[label] = 100.0 * canonical_sum(std::move(values)) / m;
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  auto& topk = j["top_k_accuracy"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.top_k_accuracy) topk[std::to_string(k)] = v;
  j["mean_ap"] = report.mean_ap;
  j["per_class_ap"] = nlohmann::ordered_json::object();
  for (const auto& [label, v] : report.per_class_ap) j["per_class_ap"][label] = v;
  j["query_count"] = report.query_count;
  j["gallery_count"] = report.gallery_count;
  j["skipped_count"] = report.skipped_count;
  j["query_modalities"] = nlohmann::ordered_json::object();
  for (const auto& [m, c] : report.query_modalities) j["query_modalities"][m] = c;
  j["protocol"] = to_string(report.protocol);
  j["ap_cutoff"] = report.ap_cutoff ? nlohmann::ordered_json(*report.ap_cutoff) : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

std::string format_table(const EvalReport& report, std::string_view method) {
  const int name_width = static_cast<int>(std::max<std::size_t>(method.size(), 6));
  char buf[64];
  std::ostringstream os;
  std::snprintf(buf, sizeof buf, "%-*s", name_width, "Method");
  os << buf;
  for (const auto& [k, v] : report.top_k_accuracy) {
    std::snprintf(buf, sizeof buf, "  %7s", ("Top-" + std::to_string(k)).c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "  %7s\n", "mAP");
  os << buf;

  os << std::string(method) << std::string(static_cast<std::size_t>(name_width) - method.size(), ' ');
  for (const auto& [k, v] : report.top_k_accuracy) {
    std::snprintf(buf, sizeof buf, "  %7.2f", v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "  %7.2f\n", report.mean_ap);
  os << buf;
  os << "queries " << report.query_count << "  gallery " << report.gallery_count << "  skipped "
     << report.skipped_count << "  protocol " << to_string(report.protocol) << '\n';
  return os.str();
}

}  // namespace snapdiag
