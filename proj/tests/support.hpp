#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>
#include <cmath>

#include "evrag/cli.hpp"
#include "evrag/embedding.hpp"
#include "evrag/error.hpp"
#include "evrag/http.hpp"
#include "evrag/ingest.hpp"
#include "evrag/pubmed.hpp"
#include "evrag/vindex.hpp"

namespace evrag::test {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(EVRAG_FIXTURES_DIR) / rel; }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary);
  out << data;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "evrag") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
             std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

/// Time moves only through sleep_for.
class MockClock : public http::Clock {
 public:
  time_point now() const override {
    std::lock_guard lock(mutex_);
    return now_;
  }
  void sleep_for(std::chrono::milliseconds d) override {
    std::lock_guard lock(mutex_);
    now_ += d;
    slept_ += d;
  }
  void advance(std::chrono::milliseconds d) { sleep_for(d); }
  std::chrono::milliseconds slept() const {
    std::lock_guard lock(mutex_);
    return slept_;
  }

 private:
  mutable std::mutex mutex_;
  time_point now_{};
  std::chrono::milliseconds slept_{0};
};

/// Scripted transport; the handler sees every request.
class FakeTransport : public http::Client {
 public:
  using Handler = std::function<http::Response(const http::Request&)>;
  explicit FakeTransport(Handler handler) : handler_(std::move(handler)) {}

  http::Response send(const http::Request& request) override {
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
    }
    return handler_(request);
  }

  std::vector<http::Request> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }
  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
  }

 private:
  Handler handler_;
  mutable std::mutex mutex_;
  std::vector<http::Request> requests_;
};

/// Serves the canned esearch/efetch fixtures for any query.
inline std::shared_ptr<FakeTransport> canned_pubmed(std::string esearch = "pubmed/esearch_cocaine.json",
                                                    std::string efetch = "pubmed/efetch_cocaine.xml") {
  const auto search_body = read_file(fixture(esearch));
  const auto fetch_body = read_file(fixture(efetch));
  return std::make_shared<FakeTransport>([search_body, fetch_body](const http::Request& r) {
    if (r.url.find("esearch.fcgi") != std::string::npos) return http::Response{200, search_body};
    if (r.url.find("efetch.fcgi") != std::string::npos) return http::Response{200, fetch_body};
    return http::Response{404, ""};
  });
}

inline std::shared_ptr<FakeTransport> dead_transport() {
  return std::make_shared<FakeTransport>([](const http::Request&) -> http::Response {
    throw Error(ErrorCode::TransportError, "connection refused");
  });
}

inline pubmed::Date fixed_today() { return pubmed::parse_iso_date("2024-12-15"); }

inline std::shared_ptr<pubmed::LitClient> make_lit_client(std::shared_ptr<http::Client> transport,
                                                          std::shared_ptr<http::Clock> clock = std::make_shared<MockClock>()) {
  pubmed::ClientConfig cfg;
  cfg.base_url = "http://pubmed.invalid/eutils";
  cfg.retry.attempts = 2;
  cfg.retry.initial_backoff = std::chrono::milliseconds(1);
  return std::make_shared<pubmed::LitClient>(cfg, std::move(transport), std::move(clock), fixed_today);
}

struct FixtureIndex {
  std::vector<chunker::Chunk> chunks;
  std::shared_ptr<const vindex::HnswIndex> index;
};

/// ingest -> chunk -> embed -> index over the 10-document fixture corpus.
inline FixtureIndex build_fixture_index(const embedding::Embedder& embedder, const fs::path& work) {
  const auto docs = ingest::load_manifest(fixture("corpus/manifest.json"));
  const auto normalized = work / "normalized";
  ingest::run_ingest(docs, ingest::ExtractorRegistry::with_defaults(), normalized);
  FixtureIndex out;
  out.chunks = cli::chunk_path(normalized, chunker::kDefaultTargetChars);
  std::vector<std::string> texts;
  for (const auto& c : out.chunks) texts.push_back(c.text);
  const auto vectors = embedding::embed_texts(texts, embedder);
  std::vector<vindex::VectorRecord> records;
  for (std::size_t i = 0; i < vectors.size(); ++i) records.push_back({out.chunks[i].chunk_id, vectors[i]});
  out.index = std::make_shared<const vindex::HnswIndex>(
      cli::build_chunk_index(out.chunks, records, cli::document_info(docs)));
  return out;
}

/// Seeded unit vectors, row-major.
inline std::vector<float> random_unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> out(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      out[i * dim + d] = gauss(rng);
      norm += double(out[i * dim + d]) * out[i * dim + d];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (std::size_t d = 0; d < dim; ++d) out[i * dim + d] *= inv;
  }
  return out;
}

inline embedding::Embedding row_embedding(const std::vector<float>& data, std::size_t dim, std::size_t i) {
  return embedding::Embedding(std::vector<float>(data.begin() + i * dim, data.begin() + (i + 1) * dim));
}

}  // namespace evrag::test
