#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "snapdiag/model.hpp"

namespace snapdiag {

/// Immutable, validated gallery: a row-major count x dim float block plus one
/// record per row. Built only through build_snapshot().
class IndexSnapshot {
 public:
  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  std::span<const float> vectors() const noexcept { return vectors_; }
  std::span<const float> row(std::size_t r) const noexcept {
    return std::span<const float>(vectors_).subspan(r * dim_, dim_);
  }
  const std::vector<GalleryRecord>& records() const noexcept { return records_; }
  const GalleryRecord& record(std::size_t r) const noexcept { return records_[r]; }

  std::optional<std::size_t> find_row(std::string_view id) const;

  /// Distinct class labels, sorted ascending.
  const std::vector<std::string>& class_labels() const noexcept { return class_labels_; }
  /// Position of record(r).class_label within class_labels().
  std::uint32_t class_index(std::size_t r) const noexcept { return class_of_row_[r]; }
  std::optional<std::uint32_t> find_class(std::string_view label) const;

  /// Number of records per class, aligned with class_labels().
  const std::vector<std::size_t>& class_counts() const noexcept { return class_counts_; }

  bool has_modality(Modality m) const noexcept;

 private:
  IndexSnapshot() = default;
  friend IndexSnapshot build_snapshot(std::vector<GalleryRecord>, std::vector<float>, std::size_t);

  std::size_t dim_ = 0;
  std::vector<float> vectors_;
  std::vector<GalleryRecord> records_;
  std::unordered_map<std::string, std::size_t> row_by_id_;
  std::vector<std::string> class_labels_;
  std::vector<std::uint32_t> class_of_row_;
  std::vector<std::size_t> class_counts_;
};

/// Validates and freezes a gallery. records[i].row must equal i; vectors
/// holds records.size() * dim floats.
///
/// Throws DimensionMismatch, NormViolation, NonFiniteValue, DuplicateId or
/// InvariantViolation (misaligned rows, empty class label, dim == 0).
IndexSnapshot build_snapshot(std::vector<GalleryRecord> records, std::vector<float> vectors,
                             std::size_t dim);

struct QuerySpec {
  EmbeddingVector vector;
  std::size_t k = 10;
  std::optional<std::string> exclude_id;
  std::optional<std::set<std::string>> class_filter;
  std::optional<Modality> modality_filter;
};

struct ScoredRow {
  std::size_t row;
  double score;
};

/// Top-k eligible rows ordered by score descending, ties by record id
/// ascending. Scores are 64-bit dot products accumulated in component order.
std::vector<ScoredRow> rank_rows(const IndexSnapshot& snapshot, const QuerySpec& query);

/// Exhaustive exact cosine search; rank_rows() converted to RankedHit.
std::vector<RankedHit> search(const IndexSnapshot& snapshot, const QuerySpec& query);

/// search() for every query, fanned out over worker threads. Output order
/// matches input order. A dimension mismatch names the offending query index.
std::vector<std::vector<RankedHit>> search_batch(const IndexSnapshot& snapshot,
                                                 std::span<const QuerySpec> queries,
                                                 unsigned threads = 0);

/// Number of workers used when a caller passes threads == 0.
unsigned default_worker_count() noexcept;

}  // namespace snapdiag
