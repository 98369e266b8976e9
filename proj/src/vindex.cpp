#include "evrag/vindex.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <queue>
#include <sstream>

#include <zlib.h>

#include "evrag/error.hpp"
#include "evrag/kernels.hpp"

namespace evrag::vindex {

namespace {

constexpr char kIndexMagic[4] = {'E', 'V', 'R', 'X'};
constexpr char kVectorsMagic[4] = {'E', 'V', 'R', 'V'};

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) { buf_.append(static_cast<const char*>(data), n); }
  template <typename T>
  void le(T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>(u & 0xFF));
      u = static_cast<U>(u >> 8);
    }
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    le(bits);
  }
  void str(std::string_view s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void crc() {
    const auto sum = ::crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()),
                             static_cast<uInt>(buf_.size()));
    le(static_cast<std::uint32_t>(sum));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptFile, what_ + ": truncated");
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u = static_cast<U>(u | (static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i)));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float f32() {
    const auto bits = le<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const auto bits = le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const auto n = le<std::uint32_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Checks magic, version and trailing CRC; returns the payload between the
// header and the checksum.
std::string_view open_container(std::string_view bytes, const char (&magic)[4], const std::string& what) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw Error(ErrorCode::CorruptFile, what + ": bad magic");
  }
  const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                                  (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                what + ": version " + std::to_string(version) + ", expected " +
                    std::to_string(kFormatVersion));
  }
  if (bytes.size() < 10) throw Error(ErrorCode::CorruptFile, what + ": truncated");
  ByteReader tail(bytes.substr(bytes.size() - 4), what);
  const auto stored = tail.le<std::uint32_t>();
  const auto actual = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size() - 4)));
  if (stored != actual) throw Error(ErrorCode::CorruptFile, what + ": checksum mismatch");
  return bytes.substr(6, bytes.size() - 10);
}

// Ties resolve toward the earlier-inserted node so graph construction is
// deterministic.
struct Better {
  template <typename C>
  bool operator()(const C& a, const C& b) const {
    return a.score != b.score ? a.score > b.score : a.node < b.node;
  }
};

void sort_hits(std::vector<SearchHit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    return a.score != b.score ? a.score > b.score : a.item_id < b.item_id;
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// params

HnswParams HnswParams::with_m(std::size_t m, std::uint64_t seed) {
  HnswParams p;
  p.M = m;
  p.M0 = 2 * m;
  p.mL = 1.0 / std::log(static_cast<double>(m));
  p.rng_seed = seed;
  return p;
}

void HnswParams::validate() const {
  if (M < 2) throw Error(ErrorCode::InvalidArgument, "M must be >= 2");
  if (M0 < M) throw Error(ErrorCode::InvalidArgument, "M0 must be >= M");
  if (ef_construction < M) throw Error(ErrorCode::InvalidArgument, "ef_construction must be >= M");
  if (ef_search < 1) throw Error(ErrorCode::InvalidArgument, "ef_search must be >= 1");
  if (!(mL > 0.0) || !std::isfinite(mL)) throw Error(ErrorCode::InvalidArgument, "mL must be > 0");
}

// ---------------------------------------------------------------------------
// index

HnswIndex::HnswIndex(std::size_t dim, HnswParams params)
    : dim_(dim), params_(params), rng_(params.rng_seed), mutex_(std::make_unique<std::shared_mutex>()) {
  if (dim_ < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  params_.validate();
}

HnswIndex::HnswIndex(HnswIndex&& other) noexcept = default;
HnswIndex& HnswIndex::operator=(HnswIndex&& other) noexcept = default;
HnswIndex::~HnswIndex() = default;

std::size_t HnswIndex::size() const { return ids_.size(); }

std::span<const float> HnswIndex::vector(std::size_t node) const {
  return std::span<const float>(vectors_).subspan(node * dim_, dim_);
}

std::optional<std::size_t> HnswIndex::node_of(const std::string& item_id) const {
  const auto it = by_id_.find(item_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

int HnswIndex::draw_level() {
  // U in (0, 1] from the top 53 bits, independent of the standard library's
  // distribution implementations.
  const double u = static_cast<double>((rng_() >> 11) + 1) * 0x1.0p-53;
  return static_cast<int>(std::floor(-std::log(u) * params_.mL));
}

float HnswIndex::score(std::span<const float> query, std::uint32_t node) const {
  return kernels::dot(query, vector(node));
}

std::uint32_t HnswIndex::greedy_closest(std::span<const float> query, std::uint32_t start,
                                        int layer) const {
  std::uint32_t best = start;
  float best_score = score(query, start);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto n : links_[best][static_cast<std::size_t>(layer)]) {
      const float s = score(query, n);
      if (s > best_score || (s == best_score && n < best)) {
        best = n;
        best_score = s;
        changed = true;
      }
    }
  }
  return best;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> query,
                                                          const std::vector<Candidate>& entry_points,
                                                          std::size_t ef, int layer) const {
  const Better better;
  // Frontier pops the best candidate; results keeps the worst on top.
  const auto frontier_order = [&](const Candidate& a, const Candidate& b) { return better(b, a); };
  const auto result_order = [&](const Candidate& a, const Candidate& b) { return better(a, b); };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(frontier_order)> frontier(frontier_order);
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(result_order)> results(result_order);
  std::vector<std::uint8_t> visited(ids_.size(), 0);

  for (const auto& ep : entry_points) {
    if (visited[ep.node]) continue;
    visited[ep.node] = 1;
    frontier.push(ep);
    results.push(ep);
    if (results.size() > ef) results.pop();
  }

  while (!frontier.empty()) {
    const Candidate current = frontier.top();
    if (results.size() >= ef && better(results.top(), current)) break;
    frontier.pop();
    for (const auto n : links_[current.node][static_cast<std::size_t>(layer)]) {
      if (visited[n]) continue;
      visited[n] = 1;
      const Candidate c{score(query, n), n};
      if (results.size() < ef || better(c, results.top())) {
        frontier.push(c);
        results.push(c);
        if (results.size() > ef) results.pop();
      }
    }
  }

  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

void HnswIndex::prune(std::uint32_t node, int layer) {
  auto& list = links_[node][static_cast<std::size_t>(layer)];
  const std::size_t cap = layer == 0 ? params_.M0 : params_.M;
  if (list.size() <= cap) return;
  std::vector<Candidate> scored;
  scored.reserve(list.size());
  const auto base = vector(node);
  for (const auto n : list) scored.push_back(Candidate{score(base, n), n});
  std::sort(scored.begin(), scored.end(), Better{});
  list.clear();
  for (std::size_t i = 0; i < cap; ++i) list.push_back(scored[i].node);
}

void HnswIndex::insert(const std::string& item_id, const embedding::Embedding& vec,
                       std::string payload) {
  if (vec.dim() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector has " + std::to_string(vec.dim()) + " dims, index has " + std::to_string(dim_));
  }
  if (!vec.all_finite() || !vec.is_unit()) {
    throw Error(ErrorCode::InvalidArgument, "indexed vectors must be finite and unit-normalized");
  }
  std::unique_lock lock(*mutex_);
  if (by_id_.count(item_id) != 0) throw Error(ErrorCode::DuplicateId, item_id);

  const auto node = static_cast<std::uint32_t>(ids_.size());
  const int node_level = draw_level();
  vectors_.insert(vectors_.end(), vec.values().begin(), vec.values().end());
  ids_.push_back(item_id);
  payloads_.push_back(std::move(payload));
  levels_.push_back(node_level);
  links_.emplace_back(static_cast<std::size_t>(node_level) + 1);
  by_id_.emplace(item_id, node);

  if (!entry_) {
    entry_ = node;
    max_level_ = node_level;
    return;
  }

  const auto query = vector(node);
  auto ep = static_cast<std::uint32_t>(*entry_);
  for (int layer = max_level_; layer > node_level; --layer) ep = greedy_closest(query, ep, layer);

  std::vector<Candidate> entry_points{Candidate{score(query, ep), ep}};
  for (int layer = std::min(node_level, max_level_); layer >= 0; --layer) {
    auto found = search_layer(query, entry_points, params_.ef_construction, layer);
    auto& mine = links_[node][static_cast<std::size_t>(layer)];
    for (std::size_t i = 0; i < found.size() && mine.size() < params_.M; ++i) {
      mine.push_back(found[i].node);
    }
    for (const auto n : mine) {
      links_[n][static_cast<std::size_t>(layer)].push_back(node);
      prune(n, layer);
    }
    entry_points = std::move(found);
  }

  if (node_level > max_level_) {
    entry_ = node;
    max_level_ = node_level;
  }
}

std::vector<SearchHit> HnswIndex::search_unlocked(std::span<const float> query, std::size_t k,
                                                  std::size_t ef) const {
  if (!entry_) return {};
  auto ep = static_cast<std::uint32_t>(*entry_);
  for (int layer = max_level_; layer > 0; --layer) ep = greedy_closest(query, ep, layer);
  const auto found = search_layer(query, {Candidate{score(query, ep), ep}}, std::max(ef, k), 0);

  std::vector<SearchHit> hits;
  hits.reserve(found.size());
  for (const auto& c : found) hits.push_back(SearchHit{ids_[c.node], static_cast<double>(c.score), payloads_[c.node]});
  sort_hits(hits);
  if (hits.size() > k) hits.resize(k);
  return hits;
}

namespace {

std::vector<float> unit_query(std::span<const float> query, std::size_t dim) {
  if (query.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has " + std::to_string(query.size()) + " dims, index has " + std::to_string(dim));
  }
  std::vector<float> q(query.begin(), query.end());
  if (!kernels::normalize_rows_serial(q, dim)) throw Error(ErrorCode::ZeroVector, "zero query vector");
  return q;
}

}  // namespace

std::vector<SearchHit> HnswIndex::search(std::span<const float> query, std::size_t k,
                                         std::optional<std::size_t> ef) const {
  if (k < 1) throw Error(ErrorCode::BadK, "k must be >= 1");
  std::shared_lock lock(*mutex_);
  if (ids_.empty()) return {};
  const auto q = unit_query(query, dim_);
  return search_unlocked(q, k, ef.value_or(params_.ef_search));
}

std::vector<std::vector<SearchHit>> HnswIndex::search_batch_serial(std::span<const float> queries,
                                                                   std::size_t k,
                                                                   std::optional<std::size_t> ef) const {
  const std::size_t n = queries.size() / dim_;
  std::vector<std::vector<SearchHit>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = search(queries.subspan(i * dim_, dim_), k, ef);
  return out;
}

std::vector<std::vector<SearchHit>> HnswIndex::search_batch_parallel(std::span<const float> queries,
                                                                     std::size_t k,
                                                                     std::optional<std::size_t> ef) const {
  const auto n = static_cast<long>(queries.size() / dim_);
  std::vector<std::vector<SearchHit>> out(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    try {
      out[i] = search(queries.subspan(static_cast<std::size_t>(i) * dim_, dim_), k, ef);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(ErrorCode::InvalidArgument, e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence

void HnswIndex::persist(const std::filesystem::path& path) const {
  std::shared_lock lock(*mutex_);
  ByteWriter w;
  w.raw(kIndexMagic, 4);
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(params_.M));
  w.le(static_cast<std::uint32_t>(params_.M0));
  w.le(static_cast<std::uint32_t>(params_.ef_construction));
  w.le(static_cast<std::uint32_t>(params_.ef_search));
  w.f64(params_.mL);
  w.le(params_.rng_seed);
  w.le(static_cast<std::uint32_t>(dim_));
  std::ostringstream rng_state;
  rng_state << rng_;
  w.str(rng_state.str());
  w.le(static_cast<std::uint64_t>(ids_.size()));
  w.le(static_cast<std::int64_t>(entry_ ? static_cast<std::int64_t>(*entry_) : -1));
  w.le(static_cast<std::int32_t>(max_level_));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.str(ids_[i]);
    for (float v : vector(i)) w.f32(v);
    w.str(payloads_[i]);
    w.le(static_cast<std::int32_t>(levels_[i]));
    for (const auto& layer : links_[i]) {
      w.le(static_cast<std::uint32_t>(layer.size()));
      for (const auto n : layer) w.le(n);
    }
  }
  w.crc();
  write_all(path, w.bytes());
}

HnswIndex HnswIndex::load(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const std::string what = path.string();
  ByteReader r(open_container(bytes, kIndexMagic, what), what);

  HnswParams p;
  p.M = r.le<std::uint32_t>();
  p.M0 = r.le<std::uint32_t>();
  p.ef_construction = r.le<std::uint32_t>();
  p.ef_search = r.le<std::uint32_t>();
  p.mL = r.f64();
  p.rng_seed = r.le<std::uint64_t>();
  const std::size_t dim = r.le<std::uint32_t>();
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptFile, what + ": " + e.what());
  }
  if (dim < 1) throw Error(ErrorCode::CorruptFile, what + ": zero dimension");

  HnswIndex index(dim, p);
  std::istringstream rng_state(r.str());
  rng_state >> index.rng_;
  if (!rng_state) throw Error(ErrorCode::CorruptFile, what + ": bad RNG state");

  const auto count = r.le<std::uint64_t>();
  const auto entry = r.le<std::int64_t>();
  const auto max_level = r.le<std::int32_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = r.str();
    for (std::size_t d = 0; d < dim; ++d) index.vectors_.push_back(r.f32());
    index.payloads_.push_back(r.str());
    const auto level = r.le<std::int32_t>();
    if (level < 0 || level > max_level) throw Error(ErrorCode::CorruptFile, what + ": bad level");
    std::vector<std::vector<std::uint32_t>> layers(static_cast<std::size_t>(level) + 1);
    for (auto& layer : layers) {
      const auto n = r.le<std::uint32_t>();
      r.need(static_cast<std::size_t>(n) * 4);
      layer.reserve(n);
      for (std::uint32_t j = 0; j < n; ++j) {
        const auto nb = r.le<std::uint32_t>();
        if (nb >= count) throw Error(ErrorCode::CorruptFile, what + ": neighbor out of range");
        layer.push_back(nb);
      }
    }
    if (!index.by_id_.emplace(id, static_cast<std::uint32_t>(i)).second) {
      throw Error(ErrorCode::CorruptFile, what + ": duplicate id " + id);
    }
    index.ids_.push_back(std::move(id));
    index.levels_.push_back(level);
    index.links_.push_back(std::move(layers));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::CorruptFile, what + ": trailing bytes");
  if (count == 0) {
    if (entry != -1) throw Error(ErrorCode::CorruptFile, what + ": entry point in empty index");
  } else {
    if (entry < 0 || static_cast<std::uint64_t>(entry) >= count ||
        index.levels_[static_cast<std::size_t>(entry)] != max_level) {
      throw Error(ErrorCode::CorruptFile, what + ": bad entry point");
    }
    index.entry_ = static_cast<std::size_t>(entry);
    index.max_level_ = max_level;
  }
  return index;
}

// ---------------------------------------------------------------------------
// brute force

std::vector<SearchHit> brute_force_topk(const std::vector<StoredItem>& items,
                                        std::span<const float> query, std::size_t k) {
  if (items.empty()) return {};
  const std::size_t dim = query.size();
  std::vector<float> matrix;
  matrix.reserve(items.size() * dim);
  for (const auto& item : items) {
    if (item.vector.size() != dim) throw Error(ErrorCode::DimensionMismatch, item.item_id);
    matrix.insert(matrix.end(), item.vector.begin(), item.vector.end());
  }
  const auto q = unit_query(query, dim);
  std::vector<float> scores(items.size());
  kernels::score_all_parallel(kernels::VectorView{matrix, dim}, q, scores);
  const auto top = kernels::select_topk(scores, k, [&](std::size_t a, std::size_t b) {
    return items[a].item_id < items[b].item_id;
  });
  std::vector<SearchHit> hits;
  for (const auto& s : top) {
    hits.push_back(SearchHit{items[s.row].item_id, static_cast<double>(s.score), items[s.row].payload});
  }
  return hits;
}

std::vector<SearchHit> brute_force_topk(const HnswIndex& index, std::span<const float> query,
                                        std::size_t k) {
  std::vector<StoredItem> items;
  items.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    items.push_back(StoredItem{index.item_id(i), index.vector(i), index.payload(i)});
  }
  return brute_force_topk(items, query, k);
}

// ---------------------------------------------------------------------------
// vectors.bin

void write_vectors(const std::filesystem::path& path, std::size_t dim,
                   const std::vector<VectorRecord>& records) {
  ByteWriter w;
  w.raw(kVectorsMagic, 4);
  w.le(kFormatVersion);
  w.le(static_cast<std::uint32_t>(dim));
  w.le(static_cast<std::uint64_t>(records.size()));
  for (const auto& rec : records) {
    if (rec.vector.dim() != dim) throw Error(ErrorCode::DimensionMismatch, rec.id);
    w.str(rec.id);
    for (float v : rec.vector.values()) w.f32(v);
  }
  w.crc();
  write_all(path, w.bytes());
}

std::vector<VectorRecord> read_vectors(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const std::string what = path.string();
  ByteReader r(open_container(bytes, kVectorsMagic, what), what);
  const std::size_t dim = r.le<std::uint32_t>();
  const auto count = r.le<std::uint64_t>();
  std::vector<VectorRecord> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    VectorRecord rec;
    rec.id = r.str();
    std::vector<float> values(dim);
    for (auto& v : values) v = r.f32();
    rec.vector = embedding::Embedding(std::move(values));
    out.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::CorruptFile, what + ": trailing bytes");
  return out;
}

}  // namespace evrag::vindex
