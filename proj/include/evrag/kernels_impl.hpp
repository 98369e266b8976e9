#pragma once

#include <algorithm>
#include <numeric>

namespace evrag::kernels {

template <typename KeyLess>
std::vector<Scored> select_topk(std::span<const float> scores, std::size_t k, KeyLess key_less) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return key_less(a, b);
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    better);
  std::vector<Scored> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(Scored{order[i], scores[order[i]]});
  return out;
}

}  // namespace evrag::kernels
