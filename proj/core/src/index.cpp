#include "snapdiag/index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <thread>

#include "parallel.hpp"

namespace snapdiag {

std::optional<std::size_t> IndexSnapshot::find_row(std::string_view id) const {
  auto it = row_by_id_.find(std::string(id));
  if (it == row_by_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> IndexSnapshot::find_class(std::string_view label) const {
  auto it = std::lower_bound(class_labels_.begin(), class_labels_.end(), label);
  if (it == class_labels_.end() || *it != label) return std::nullopt;
  return static_cast<std::uint32_t>(it - class_labels_.begin());
}

bool IndexSnapshot::has_modality(Modality m) const noexcept {
  return std::any_of(records_.begin(), records_.end(), [m](const auto& r) { return r.modality == m; });
}

IndexSnapshot build_snapshot(std::vector<GalleryRecord> records, std::vector<float> vectors,
                             std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::InvariantViolation, "dim must be positive");
  if (vectors.size() != records.size() * dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector block holds " + std::to_string(vectors.size()) + " floats, expected " +
                    std::to_string(records.size()) + " x " + std::to_string(dim));
  }

  IndexSnapshot s;
  s.dim_ = dim;
  s.row_by_id_.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.row != r) {
      throw Error(ErrorCode::InvariantViolation,
                  "record '" + rec.id + "' has row " + std::to_string(rec.row) + " at position " + std::to_string(r));
    }
    if (rec.class_label.empty()) {
      throw Error(ErrorCode::InvariantViolation, "record '" + rec.id + "' has an empty class label");
    }
    if (!s.row_by_id_.emplace(rec.id, r).second) {
      throw Error(ErrorCode::DuplicateId, "id '" + rec.id + "' appears more than once");
    }
    const std::span<const float> row(vectors.data() + r * dim, dim);
    for (float x : row) {
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, "row " + std::to_string(r) + " has a non-finite component");
    }
    const double norm = l2_norm(row);
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::NormViolation,
                  "row " + std::to_string(r) + " ('" + rec.id + "') has norm " + std::to_string(norm));
    }
  }

  for (const auto& rec : records) s.class_labels_.push_back(rec.class_label);
  std::sort(s.class_labels_.begin(), s.class_labels_.end());
  s.class_labels_.erase(std::unique(s.class_labels_.begin(), s.class_labels_.end()), s.class_labels_.end());
  s.class_counts_.assign(s.class_labels_.size(), 0);
  s.class_of_row_.reserve(records.size());
  for (const auto& rec : records) {
    const auto c = static_cast<std::uint32_t>(
        std::lower_bound(s.class_labels_.begin(), s.class_labels_.end(), rec.class_label) - s.class_labels_.begin());
    s.class_of_row_.push_back(c);
    ++s.class_counts_[c];
  }

  s.records_ = std::move(records);
  s.vectors_ = std::move(vectors);
  return s;
}

namespace {

// Four rows at a time; each row keeps its own in-order accumulator so the
// result is bit-identical to dot_f64 on that row.
void score_all_rows(const IndexSnapshot& snapshot, std::span<const float> query, std::vector<double>& scores) {
  const std::size_t n = snapshot.count();
  const std::size_t dim = snapshot.dim();
  const float* base = snapshot.vectors().data();
  const float* q = query.data();
  scores.resize(n);

  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    const float* r0 = base + r * dim;
    const float* r1 = r0 + dim;
    const float* r2 = r1 + dim;
    const float* r3 = r2 + dim;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double qi = q[i];
      s0 += static_cast<double>(r0[i]) * qi;
      s1 += static_cast<double>(r1[i]) * qi;
      s2 += static_cast<double>(r2[i]) * qi;
      s3 += static_cast<double>(r3[i]) * qi;
    }
    scores[r] = s0;
    scores[r + 1] = s1;
    scores[r + 2] = s2;
    scores[r + 3] = s3;
  }
  for (; r < n; ++r) scores[r] = dot_f64(base + r * dim, q, dim);
}

}  // namespace

std::vector<ScoredRow> rank_rows(const IndexSnapshot& snapshot, const QuerySpec& query) {
  if (query.vector.dim() != snapshot.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "query has dim " + std::to_string(query.vector.dim()) +
                                                  ", gallery expects " + std::to_string(snapshot.dim()));
  }
  if (query.k == 0 || snapshot.empty()) return {};

  std::optional<std::size_t> excluded;
  if (query.exclude_id) excluded = snapshot.find_row(*query.exclude_id);

  std::vector<bool> class_allowed;
  if (query.class_filter) {
    class_allowed.assign(snapshot.class_labels().size(), false);
    for (const auto& label : *query.class_filter) {
      if (auto c = snapshot.find_class(label)) class_allowed[*c] = true;
    }
  }

  auto eligible = [&](std::size_t r) {
    if (excluded && *excluded == r) return false;
    if (query.modality_filter && snapshot.record(r).modality != *query.modality_filter) return false;
    if (query.class_filter && !class_allowed[snapshot.class_index(r)]) return false;
    return true;
  };

  thread_local std::vector<double> scores;
  score_all_rows(snapshot, query.vector.values(), scores);

  // Strict total order: higher score first, then lower id.
  auto better = [&](const ScoredRow& a, const ScoredRow& b) {
    if (a.score != b.score) return a.score > b.score;
    return snapshot.record(a.row).id < snapshot.record(b.row).id;
  };

  std::vector<ScoredRow> kept;
  const std::size_t n = snapshot.count();
  if (query.k >= n) {
    kept.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (eligible(r)) kept.push_back({r, scores[r]});
    }
  } else {
    // Max-heap under `better` keeps the worst retained row on top.
    kept.reserve(query.k + 1);
    for (std::size_t r = 0; r < n; ++r) {
      if (!eligible(r)) continue;
      const ScoredRow cand{r, scores[r]};
      if (kept.size() < query.k) {
        kept.push_back(cand);
        std::push_heap(kept.begin(), kept.end(), better);
      } else if (better(cand, kept.front())) {
        std::pop_heap(kept.begin(), kept.end(), better);
        kept.back() = cand;
        std::push_heap(kept.begin(), kept.end(), better);
      }
    }
  }
  std::sort(kept.begin(), kept.end(), better);
  if (kept.size() > query.k) kept.resize(query.k);
  return kept;
}

std::vector<RankedHit> search(const IndexSnapshot& snapshot, const QuerySpec& query) {
  const auto rows = rank_rows(snapshot, query);
  std::vector<RankedHit> hits;
  hits.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& rec = snapshot.record(rows[i].row);
    hits.push_back({rec.id, rec.class_label, rows[i].score, i + 1});
  }
  return hits;
}

unsigned default_worker_count() noexcept {
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::vector<RankedHit>> search_batch(const IndexSnapshot& snapshot,
                                                 std::span<const QuerySpec> queries, unsigned threads) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].vector.dim() != snapshot.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "query " + std::to_string(i) + " has dim " +
                                                    std::to_string(queries[i].vector.dim()) + ", gallery expects " +
                                                    std::to_string(snapshot.dim()));
    }
  }
  std::vector<std::vector<RankedHit>> out(queries.size());
  detail::parallel_for(queries.size(), threads == 0 ? default_worker_count() : threads,
                       [&](std::size_t i) { out[i] = search(snapshot, queries[i]); });
  return out;
}

}  // namespace snapdiag
