#include "snapdiag/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace snapdiag {

std::string_view to_string(Modality m) noexcept {
  return m == Modality::Image ? "image" : "text";
}

std::optional<Modality> parse_modality(std::string_view s) noexcept {
  if (s == "image") return Modality::Image;
  if (s == "text") return Modality::Text;
  return std::nullopt;
}

double l2_norm(std::span<const float> v) noexcept {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sum);
}

double dot_f64(const float* a, const float* b, std::size_t n) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

static void require_finite(std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw Error(ErrorCode::NonFiniteValue, "component " + std::to_string(i) + " is not finite");
    }
  }
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values) {
  require_finite(values);
  const double norm = l2_norm(values);
  if (std::abs(norm - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::NormViolation, "vector norm " + std::to_string(norm) + " is not 1");
  }
  return EmbeddingVector(std::move(values));
}

EmbeddingVector normalize(std::span<const float> raw, std::size_t dim) {
  if (raw.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected dim " + std::to_string(dim) + ", got " + std::to_string(raw.size()));
  }
  require_finite(raw);
  const double norm = l2_norm(raw);
  if (norm < kDegenerateNorm) {
    throw Error(ErrorCode::DegenerateVector, "vector has zero norm");
  }
  std::vector<float> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(),
                 [norm](float x) { return static_cast<float>(static_cast<double>(x) / norm); });
  return EmbeddingVector(std::move(out));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cannot compare dim " + std::to_string(a.dim()) + " with dim " + std::to_string(b.dim()));
  }
  return dot_f64(a.values().data(), b.values().data(), a.dim());
}

std::vector<CandidateDisease> aggregate_candidates(std::span<const RankedHit> hits) {
  std::map<std::string, CandidateDisease> by_class;
  for (const auto& hit : hits) {
    auto [it, inserted] = by_class.try_emplace(hit.class_label, CandidateDisease{hit.class_label, hit.score, 0});
    auto& c = it->second;
    if (hit.score > c.score) c.score = hit.score;
    ++c.support;
  }
  std::vector<CandidateDisease> out;
  out.reserve(by_class.size());
  for (auto& [label, c] : by_class) out.push_back(std::move(c));
  std::stable_sort(out.begin(), out.end(),
                   [](const CandidateDisease& a, const CandidateDisease& b) { return a.score > b.score; });
  return out;
}

}  // namespace snapdiag
