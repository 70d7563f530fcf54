#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "snapdiag/eval.hpp"
#include "snapdiag/gallery.hpp"
#include "snapdiag/index.hpp"
#include "snapdiag/synth.hpp"

namespace {

using namespace snapdiag;

const IndexSnapshot& large_gallery() {
  static const IndexSnapshot snap = synthesize_gallery({96, 192, 512, 0.05, 11});
  return snap;
}

EmbeddingVector random_query(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n;
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return normalize(v, dim);
}

void BM_Search(benchmark::State& state) {
  const auto& snap = large_gallery();
  std::mt19937_64 rng(1);
  const QuerySpec q{random_query(rng, snap.dim()), static_cast<std::size_t>(state.range(0)), std::nullopt,
                    std::nullopt, std::nullopt};
  for (auto _ : state) benchmark::DoNotOptimize(search(snap, q));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(snap.count()));
}
BENCHMARK(BM_Search)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_SearchBatch(benchmark::State& state) {
  const auto& snap = large_gallery();
  std::mt19937_64 rng(2);
  std::vector<QuerySpec> queries;
  for (int i = 0; i < 32; ++i) queries.push_back({random_query(rng, snap.dim()), 10, std::nullopt, std::nullopt, std::nullopt});
  for (auto _ : state) benchmark::DoNotOptimize(search_batch(snap, queries));
}
BENCHMARK(BM_SearchBatch)->Unit(benchmark::kMillisecond);

void BM_LoadGallery(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / "snapdiag_bench_gallery";
  write_gallery(large_gallery(), dir);
  for (auto _ : state) benchmark::DoNotOptimize(load_gallery(dir));
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_LoadGallery)->Unit(benchmark::kMillisecond);

void BM_EvaluateLeaveOneOut(benchmark::State& state) {
  const auto snap = synthesize_gallery({89, 20, 512, 0.05, 7});
  const auto queries = queries_from_gallery(snap);
  EvalConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(snap, queries, config));
}
BENCHMARK(BM_EvaluateLeaveOneOut)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
