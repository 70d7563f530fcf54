#include <gtest/gtest.h>

#include <random>

#include "snapdiag/model.hpp"
#include "support/oracles.hpp"

using namespace snapdiag;

namespace {

RankedHit hit(std::string id, std::string cls, double score, std::size_t rank) {
  return {std::move(id), std::move(cls), score, rank};
}

}  // namespace

TEST(Normalize, ThreeFourFive) {
  const std::vector<float> raw{3.0f, 4.0f};
  const auto v = normalize(raw, 2);
  EXPECT_NEAR(v[0], 0.6, 1e-7);
  EXPECT_NEAR(v[1], 0.8, 1e-7);
}

TEST(Normalize, AlreadyUnit) {
  const std::vector<float> raw{1.0f, 0.0f, 0.0f};
  const auto v = normalize(raw, 3);
  EXPECT_EQ(v[0], 1.0f);
  EXPECT_EQ(v[1], 0.0f);
  EXPECT_EQ(v[2], 0.0f);
}

TEST(Normalize, ZeroVectorIsDegenerate) {
  const std::vector<float> raw{0.0f, 0.0f};
  try {
    normalize(raw, 2);
    FAIL() << "expected DegenerateVector";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateVector);
  }
}

TEST(Normalize, DimensionMismatch) {
  const std::vector<float> raw{1.0f, 2.0f, 3.0f};
  try {
    normalize(raw, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Normalize, RejectsNonFinite) {
  const std::vector<float> raw{1.0f, std::numeric_limits<float>::quiet_NaN()};
  EXPECT_THROW(normalize(raw, 2), Error);
}

TEST(Normalize, PropertiesOnRandomInputs) {
  std::mt19937_64 rng(42);
  std::normal_distribution<float> g(0.0f, 3.0f);
  std::uniform_real_distribution<float> scale(1e-3f, 1e3f);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t dim = 1 + rng() % 128;
    std::vector<float> raw(dim);
    for (auto& x : raw) x = g(rng);
    const auto v = normalize(raw, dim);
    EXPECT_NEAR(l2_norm(v.values()), 1.0, 1e-6);

    // Idempotent.
    const auto again = normalize(v.values(), dim);
    for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(again[i], v[i], 1e-6);

    // Invariant under positive rescaling.
    const float c = scale(rng);
    std::vector<float> scaled(raw);
    for (auto& x : scaled) x *= c;
    const auto s = normalize(scaled, dim);
    for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(s[i], v[i], 1e-6);

    EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-6);
  }
}

TEST(FromUnit, RejectsOffNorm) {
  EXPECT_THROW(EmbeddingVector::from_unit({0.5f, 0.0f}), Error);
  EXPECT_NO_THROW(EmbeddingVector::from_unit({0.6f, 0.8f}));
}

TEST(CosineSimilarity, WorkedExamples) {
  const auto x = EmbeddingVector::from_unit({1.0f, 0.0f});
  const auto y = EmbeddingVector::from_unit({0.0f, 1.0f});
  EXPECT_DOUBLE_EQ(cosine_similarity(x, x), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(x, y), 0.0);
  const auto a = EmbeddingVector::from_unit({0.6f, 0.8f});
  const auto b = EmbeddingVector::from_unit({0.8f, 0.6f});
  // 0.48 + 0.48, up to float rounding of 0.6 and 0.8
  EXPECT_NEAR(cosine_similarity(a, b), 0.96, 1e-7);
  EXPECT_EQ(cosine_similarity(a, b), cosine_similarity(b, a));
}

TEST(CosineSimilarity, DimensionMismatch) {
  const auto x = EmbeddingVector::from_unit({1.0f, 0.0f});
  const auto y = EmbeddingVector::from_unit({1.0f, 0.0f, 0.0f});
  EXPECT_THROW(cosine_similarity(x, y), Error);
}

TEST(AggregateCandidates, MaxPerClass) {
  const std::vector<RankedHit> hits{hit("A", "classX", 0.9, 1), hit("B", "classY", 0.8, 2), hit("C", "classX", 0.7, 3)};
  const auto c = aggregate_candidates(hits);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], (CandidateDisease{"classX", 0.9, 2}));
  EXPECT_EQ(c[1], (CandidateDisease{"classY", 0.8, 1}));
}

TEST(AggregateCandidates, EmptyAndSingle) {
  EXPECT_TRUE(aggregate_candidates({}).empty());
  const std::vector<RankedHit> one{hit("A", "classX", 0.5, 1)};
  const auto c = aggregate_candidates(one);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (CandidateDisease{"classX", 0.5, 1}));
}

TEST(AggregateCandidates, TiesOrderedByLabel) {
  const std::vector<RankedHit> hits{hit("A", "zeta", 0.5, 1), hit("B", "alpha", 0.5, 2)};
  const auto c = aggregate_candidates(hits);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].class_label, "alpha");
  EXPECT_EQ(c[1].class_label, "zeta");
}

TEST(AggregateCandidates, RandomProperties) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng() % 30;
    std::vector<double> scores(n);
    for (auto& s : scores) s = std::uniform_real_distribution<double>(-1, 1)(rng);
    std::sort(scores.rbegin(), scores.rend());
    std::vector<RankedHit> hits;
    for (std::size_t i = 0; i < n; ++i) hits.push_back(hit("r" + std::to_string(i), "c" + std::to_string(rng() % 5), scores[i], i + 1));

    const auto c = aggregate_candidates(hits);
    std::size_t support = 0;
    std::set<std::string> labels;
    for (std::size_t i = 0; i < c.size(); ++i) {
      support += c[i].support;
      labels.insert(c[i].class_label);
      EXPECT_LE(c[i].score, scores.front());
      if (i > 0) EXPECT_GE(c[i - 1].score, c[i].score);
    }
    EXPECT_EQ(support, n);
    EXPECT_EQ(labels.size(), c.size());
    if (n > 0) EXPECT_EQ(c.front().class_label, hits.front().class_label);
  }
}
