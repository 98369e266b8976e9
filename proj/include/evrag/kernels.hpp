#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Data-parallel scoring kernels. Every OpenMP kernel has a serial reference
// twin with the same signature; tests hold the pair to bit-identical output
// and bench/ measures the speedup.
namespace evrag::kernels {

/// Row-major matrix of float vectors.
struct VectorView {
  std::span<const float> data;
  std::size_t dim = 0;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

float dot(std::span<const float> a, std::span<const float> b);

void score_all_serial(VectorView matrix, std::span<const float> query, std::span<float> out);
void score_all_parallel(VectorView matrix, std::span<const float> query, std::span<float> out);

struct Scored {
  std::size_t row = 0;
  float score = 0.0f;
};

/// Top-k rows by score descending; equal scores order by key ascending, where
/// key_less(a, b) compares the caller's identifiers for rows a and b.
template <typename KeyLess>
std::vector<Scored> select_topk(std::span<const float> scores, std::size_t k, KeyLess key_less);

/// One query per row of `queries`, each answered with select_topk over the
/// full matrix. Results are indexed like the queries.
std::vector<std::vector<Scored>> batch_topk_serial(VectorView matrix, VectorView queries,
                                                   std::size_t k,
                                                   const std::vector<std::string>& keys);
std::vector<std::vector<Scored>> batch_topk_parallel(VectorView matrix, VectorView queries,
                                                     std::size_t k,
                                                     const std::vector<std::string>& keys);

/// In-place L2 normalization of each row. Returns false if any row is zero.
bool normalize_rows_serial(std::span<float> data, std::size_t dim);
bool normalize_rows_parallel(std::span<float> data, std::size_t dim);

}  // namespace evrag::kernels

#include "evrag/kernels_impl.hpp"
