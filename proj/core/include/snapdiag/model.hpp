#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snapdiag/error.hpp"

namespace snapdiag {

inline constexpr std::size_t kDefaultDim = 512;

// Tolerance on |norm - 1| for vectors that are stored or compared.
inline constexpr double kUnitNormTolerance = 1e-6;

// Below this L2 norm a raw embedding carries no usable direction.
inline constexpr double kDegenerateNorm = 1e-12;

enum class Modality { Image, Text };

std::string_view to_string(Modality m) noexcept;
std::optional<Modality> parse_modality(std::string_view s) noexcept;

/// A unit-norm point in the shared image/text latent space.
///
/// Instances are only produced by normalize() or from_unit(), so every
/// EmbeddingVector in the system is finite and unit-norm within
/// kUnitNormTolerance.
class EmbeddingVector {
 public:
  /// Adopts values that are already unit-norm. Throws NonFiniteValue or
  /// NormViolation when they are not; never rescales.
  static EmbeddingVector from_unit(std::vector<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}
  friend EmbeddingVector normalize(std::span<const float> raw, std::size_t dim);

  std::vector<float> values_;
};

struct GalleryRecord {
  std::string id;
  std::string class_label;
  Modality modality = Modality::Image;
  std::size_t row = 0;
  std::string uri;
  std::optional<std::string> caption;

  friend bool operator==(const GalleryRecord&, const GalleryRecord&) = default;
};

struct RankedHit {
  std::string record_id;
  std::string class_label;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const RankedHit&, const RankedHit&) = default;
};

struct CandidateDisease {
  std::string class_label;
  double score = 0.0;
  std::size_t support = 0;

  friend bool operator==(const CandidateDisease&, const CandidateDisease&) = default;
};

/// Scales raw to unit L2 norm. The norm is taken in double precision.
///
/// Throws DimensionMismatch when raw.size() != dim, NonFiniteValue on
/// NaN/Inf components and DegenerateVector when the norm is below
/// kDegenerateNorm.
EmbeddingVector normalize(std::span<const float> raw, std::size_t dim);

/// L2 norm accumulated in double.
double l2_norm(std::span<const float> v) noexcept;

/// Dot product with 64-bit accumulation in index order. Callers guarantee
/// equal lengths.
double dot_f64(const float* a, const float* b, std::size_t n) noexcept;

/// Cosine similarity of two unit vectors, i.e. their dot product.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Collapses ranked hits into one suggestion per class: best hit score and
/// number of hits of that class. Sorted by score descending, then label.
std::vector<CandidateDisease> aggregate_candidates(std::span<const RankedHit> hits);

}  // namespace snapdiag
