#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snapdiag/index.hpp"
#include "snapdiag/model.hpp"

namespace snapdiag {

enum class EvalProtocol { LeaveOneOut, HeldOut };

std::string_view to_string(EvalProtocol p) noexcept;

struct EvalConfig {
  std::vector<std::size_t> k_values{1, 5, 10};
  EvalProtocol protocol = EvalProtocol::LeaveOneOut;
  std::optional<std::size_t> ap_cutoff;  // none: AP over the full ranking
  std::optional<Modality> modality_filter;
  unsigned threads = 0;  // 0: one per hardware thread
};

struct EvalQuery {
  EmbeddingVector vector;
  std::string class_label;
  std::optional<std::string> id;
  std::optional<Modality> modality;
};

/// Percentages are in [0, 100]. Queries whose class has no relevant gallery
/// item are not scored; they only appear in skipped_count.
struct EvalReport {
  std::map<std::size_t, double> top_k_accuracy;
  double mean_ap = 0.0;
  std::map<std::string, double> per_class_ap;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::size_t skipped_count = 0;
  std::map<std::string, std::size_t> query_modalities;
  EvalProtocol protocol = EvalProtocol::LeaveOneOut;
  std::optional<std::size_t> ap_cutoff;
};

/// Non-interpolated average precision:
///   (1 / total_relevant) * sum over relevant positions i of (hits in 1..i) / i
/// Throws InvalidRelevance when total_relevant is zero or smaller than the
/// number of relevant entries.
double average_precision(const std::vector<bool>& relevance, std::size_t total_relevant);

/// True iff one of the first min(k, hits.size()) hits carries query_class.
bool top_k_hit(std::span<const RankedHit> hits, std::string_view query_class, std::size_t k);

/// Every gallery row as a query (id and modality filled in).
std::vector<EvalQuery> queries_from_gallery(const IndexSnapshot& snapshot);

/// Runs every query against the gallery and reduces Top-k accuracy and mAP.
/// The reduction does not depend on query order or thread scheduling.
///
/// Throws EmptyGallery, EmptyQuerySet, UnknownQueryId (leave-one-out with a
/// query id that is missing or not in the gallery), InvalidConfig.
EvalReport evaluate(const IndexSnapshot& snapshot, std::span<const EvalQuery> queries, const EvalConfig& config);

std::string report_to_json(const EvalReport& report);

/// Fixed-width table with one column per k plus mAP, e.g.
///   Method      Top-1   Top-5  Top-10     mAP
std::string format_table(const EvalReport& report, std::string_view method);

}  // namespace snapdiag
