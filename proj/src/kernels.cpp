#include "evrag/kernels.hpp"

#include <cassert>
#include <cmath>

namespace evrag::kernels {

float dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  const float* pa = a.data();
  const float* pb = b.data();
  const std::size_t n = a.size();
  float sum = 0.0f;
#pragma omp simd reduction(+ : sum)
  for (std::size_t i = 0; i < n; ++i) sum += pa[i] * pb[i];
  return sum;
}

void score_all_serial(VectorView matrix, std::span<const float> query, std::span<float> out) {
  const std::size_t rows = matrix.rows();
  for (std::size_t i = 0; i < rows; ++i) out[i] = dot(matrix.row(i), query);
}

void score_all_parallel(VectorView matrix, std::span<const float> query, std::span<float> out) {
  const auto rows = static_cast<long>(matrix.rows());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) out[i] = dot(matrix.row(static_cast<std::size_t>(i)), query);
}

namespace {

std::vector<Scored> topk_for_query(VectorView matrix, std::span<const float> query, std::size_t k,
                                   const std::vector<std::string>& keys) {
  std::vector<float> scores(matrix.rows());
  score_all_serial(matrix, query, scores);
  return select_topk(scores, k, [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
}

}  // namespace

std::vector<std::vector<Scored>> batch_topk_serial(VectorView matrix, VectorView queries,
                                                   std::size_t k,
                                                   const std::vector<std::string>& keys) {
  std::vector<std::vector<Scored>> out(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    out[q] = topk_for_query(matrix, queries.row(q), k, keys);
  }
  return out;
}

std::vector<std::vector<Scored>> batch_topk_parallel(VectorView matrix, VectorView queries,
                                                     std::size_t k,
                                                     const std::vector<std::string>& keys) {
  std::vector<std::vector<Scored>> out(queries.rows());
  const auto n = static_cast<long>(queries.rows());
#pragma omp parallel for schedule(dynamic, 4)
  for (long q = 0; q < n; ++q) {
    out[q] = topk_for_query(matrix, queries.row(static_cast<std::size_t>(q)), k, keys);
  }
  return out;
}

namespace {

bool normalize_one(float* row, std::size_t dim) {
  double sq = 0.0;
  for (std::size_t j = 0; j < dim; ++j) sq += static_cast<double>(row[j]) * row[j];
  if (!(sq > 0.0) || !std::isfinite(sq)) return false;
  const double inv = 1.0 / std::sqrt(sq);
  for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(row[j] * inv);
  return true;
}

}  // namespace

bool normalize_rows_serial(std::span<float> data, std::size_t dim) {
  bool ok = true;
  for (std::size_t i = 0; i * dim < data.size(); ++i) ok &= normalize_one(data.data() + i * dim, dim);
  return ok;
}

bool normalize_rows_parallel(std::span<float> data, std::size_t dim) {
  const auto rows = static_cast<long>(dim == 0 ? 0 : data.size() / dim);
  bool ok = true;
#pragma omp parallel for reduction(&& : ok) schedule(static)
  for (long i = 0; i < rows; ++i) ok = normalize_one(data.data() + i * dim, dim) && ok;
  return ok;
}

}  // namespace evrag::kernels
