// Serial reference kernels against their OpenMP twins, and HNSW against the
// exhaustive scan it approximates.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "evrag/kernels.hpp"
#include "evrag/vindex.hpp"

namespace {

using namespace evrag;

constexpr std::size_t kDim = 1024;

std::vector<float> unit_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss;
  std::vector<float> out(n * dim);
  for (auto& x : out) x = gauss(rng);
  kernels::normalize_rows_serial(out, dim);
  return out;
}

std::vector<std::string> row_keys(std::size_t n) {
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < n; ++i) keys.push_back("r" + std::to_string(i));
  return keys;
}

template <auto Kernel>
void bm_score_all(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto matrix = unit_rows(n, kDim, 1);
  const auto query = unit_rows(1, kDim, 2);
  std::vector<float> out(n);
  for (auto _ : state) {
    Kernel(kernels::VectorView{matrix, kDim}, query, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <auto Kernel>
void bm_batch_topk(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto matrix = unit_rows(n, kDim, 3);
  const auto queries = unit_rows(64, kDim, 4);
  const auto keys = row_keys(n);
  for (auto _ : state) {
    auto hits = Kernel(kernels::VectorView{matrix, kDim}, kernels::VectorView{queries, kDim}, 3, keys);
    benchmark::DoNotOptimize(hits.data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}

template <auto Kernel>
void bm_normalize(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto source = unit_rows(n, kDim, 5);
  std::vector<float> data;
  for (auto _ : state) {
    state.PauseTiming();
    data = source;
    state.ResumeTiming();
    benchmark::DoNotOptimize(Kernel(data, kDim));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

struct IndexFixture {
  std::vector<float> data;
  std::vector<float> queries;
  vindex::HnswIndex index{kDim};

  explicit IndexFixture(std::size_t n) : data(unit_rows(n, kDim, 6)), queries(unit_rows(64, kDim, 7)) {
    for (std::size_t i = 0; i < n; ++i) {
      index.insert("v" + std::to_string(i),
                   embedding::Embedding(std::vector<float>(data.begin() + i * kDim, data.begin() + (i + 1) * kDim)));
    }
  }
};

IndexFixture& index_fixture() {
  static IndexFixture f(2000);
  return f;
}

void bm_hnsw_batch_serial(benchmark::State& state) {
  auto& f = index_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.index.search_batch_serial(f.queries, 3));
  state.SetItemsProcessed(state.iterations() * 64);
}

void bm_hnsw_batch_parallel(benchmark::State& state) {
  auto& f = index_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.index.search_batch_parallel(f.queries, 3));
  state.SetItemsProcessed(state.iterations() * 64);
}

void bm_brute_force(benchmark::State& state) {
  auto& f = index_fixture();
  for (auto _ : state) {
    for (std::size_t q = 0; q < 64; ++q) {
      benchmark::DoNotOptimize(
          vindex::brute_force_topk(f.index, std::span<const float>(f.queries).subspan(q * kDim, kDim), 3));
    }
  }
  state.SetItemsProcessed(state.iterations() * 64);
}

}  // namespace

BENCHMARK_TEMPLATE(bm_score_all, kernels::score_all_serial)->Arg(2000)->Arg(20000);
BENCHMARK_TEMPLATE(bm_score_all, kernels::score_all_parallel)->Arg(2000)->Arg(20000);
BENCHMARK_TEMPLATE(bm_batch_topk, kernels::batch_topk_serial)->Arg(2000);
BENCHMARK_TEMPLATE(bm_batch_topk, kernels::batch_topk_parallel)->Arg(2000);
BENCHMARK_TEMPLATE(bm_normalize, kernels::normalize_rows_serial)->Arg(20000);
BENCHMARK_TEMPLATE(bm_normalize, kernels::normalize_rows_parallel)->Arg(20000);
BENCHMARK(bm_hnsw_batch_serial);
BENCHMARK(bm_hnsw_batch_parallel);
BENCHMARK(bm_brute_force);

BENCHMARK_MAIN();
