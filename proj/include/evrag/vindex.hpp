#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "evrag/embedding.hpp"

namespace evrag::vindex {

inline constexpr std::uint16_t kFormatVersion = 1;

struct HnswParams {
  // Sized for 1024-d embeddings: recall@3 >= 0.95 at ef_search = 64.
  std::size_t M = 48;
  std::size_t M0 = 96;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;
  double mL = 0.25831776680732876;  // 1 / ln(48)
  std::uint64_t rng_seed = 42;

  /// Defaults derived from M: M0 = 2M, mL = 1/ln(M).
  static HnswParams with_m(std::size_t m, std::uint64_t seed = 42);
  void validate() const;
};

struct SearchHit {
  std::string item_id;
  double score = 0.0;
  std::string payload;

  bool operator==(const SearchHit&) const = default;
};

/// Hierarchical navigable small world graph over unit vectors; score is the
/// dot product (cosine). Readers share, inserts are exclusive.
class HnswIndex {
 public:
  explicit HnswIndex(std::size_t dim, HnswParams params = {});
  HnswIndex(HnswIndex&& other) noexcept;
  HnswIndex& operator=(HnswIndex&& other) noexcept;
  HnswIndex(const HnswIndex&) = delete;
  HnswIndex& operator=(const HnswIndex&) = delete;
  ~HnswIndex();

  void insert(const std::string& item_id, const embedding::Embedding& vector,
              std::string payload = {});

  /// min(k, size) hits sorted by score descending, ties by item_id ascending.
  std::vector<SearchHit> search(std::span<const float> query, std::size_t k,
                                std::optional<std::size_t> ef = std::nullopt) const;
  std::vector<SearchHit> search(const embedding::Embedding& query, std::size_t k,
                                std::optional<std::size_t> ef = std::nullopt) const {
    return search(query.values(), k, ef);
  }

  /// Row q of `queries` answered by search(); OpenMP over queries.
  std::vector<std::vector<SearchHit>> search_batch_parallel(std::span<const float> queries,
                                                            std::size_t k,
                                                            std::optional<std::size_t> ef = std::nullopt) const;
  std::vector<std::vector<SearchHit>> search_batch_serial(std::span<const float> queries,
                                                          std::size_t k,
                                                          std::optional<std::size_t> ef = std::nullopt) const;

  void persist(const std::filesystem::path& path) const;
  static HnswIndex load(const std::filesystem::path& path);

  std::size_t size() const;
  std::size_t dim() const { return dim_; }
  const HnswParams& params() const { return params_; }

  // Graph introspection, mostly for tests and tooling.
  std::optional<std::size_t> node_of(const std::string& item_id) const;
  const std::string& item_id(std::size_t node) const { return ids_[node]; }
  const std::string& payload(std::size_t node) const { return payloads_[node]; }
  std::span<const float> vector(std::size_t node) const;
  int level(std::size_t node) const { return levels_[node]; }
  const std::vector<std::uint32_t>& neighbors(std::size_t node, int layer) const {
    return links_[node][static_cast<std::size_t>(layer)];
  }
  std::optional<std::size_t> entry_point() const { return entry_; }
  int max_level() const { return max_level_; }
  std::span<const float> all_vectors() const { return vectors_; }

 private:
  struct Candidate {
    float score;
    std::uint32_t node;
  };

  int draw_level();
  float score(std::span<const float> query, std::uint32_t node) const;
  std::uint32_t greedy_closest(std::span<const float> query, std::uint32_t start, int layer) const;
  std::vector<Candidate> search_layer(std::span<const float> query,
                                      const std::vector<Candidate>& entry_points, std::size_t ef,
                                      int layer) const;
  void prune(std::uint32_t node, int layer);
  std::vector<SearchHit> search_unlocked(std::span<const float> query, std::size_t k,
                                         std::size_t ef) const;

  std::size_t dim_;
  HnswParams params_;
  std::mt19937_64 rng_;
  std::vector<float> vectors_;
  std::vector<std::string> ids_;
  std::vector<std::string> payloads_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
  std::optional<std::size_t> entry_;
  int max_level_ = -1;
  std::unique_ptr<std::shared_mutex> mutex_;
};

struct StoredItem {
  std::string item_id;
  std::span<const float> vector;
  std::string payload;
};

/// Exact top-k by cosine with the same ordering rules as HnswIndex::search.
std::vector<SearchHit> brute_force_topk(const std::vector<StoredItem>& items,
                                        std::span<const float> query, std::size_t k);
std::vector<SearchHit> brute_force_topk(const HnswIndex& index, std::span<const float> query,
                                        std::size_t k);

// vectors.bin: "EVRV", u16 version, u32 dim, u64 count, then per record
// (u32 id length, id bytes, dim x f32), trailing CRC32. Little-endian.
struct VectorRecord {
  std::string id;
  embedding::Embedding vector;
};
void write_vectors(const std::filesystem::path& path, std::size_t dim,
                   const std::vector<VectorRecord>& records);
std::vector<VectorRecord> read_vectors(const std::filesystem::path& path);

}  // namespace evrag::vindex
