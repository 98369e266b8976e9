#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evrag/http.hpp"

namespace evrag::embedding {

inline constexpr std::size_t kDefaultDim = 1024;
inline constexpr double kUnitNormTolerance = 1e-6;

/// Dense vector. Vectors handed to the index are unit-normalized.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<float> values) : values_(std::move(values)) {}

  std::size_t dim() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  std::vector<float>& mutable_values() { return values_; }
  double norm() const;
  bool is_unit(double tolerance = kUnitNormTolerance) const;
  bool all_finite() const;

  /// L2-normalizes in place. Throws ZeroVector if the norm is zero.
  void normalize();

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<float> values_;
};

/// (a.b)/(|a||b|) clamped to [-1, 1].
double cosine_similarity(std::span<const float> a, std::span<const float> b);
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  return cosine_similarity(a.values(), b.values());
}

/// Hashed character-trigram bag, signed, L2-normalized. Offline stand-in for
/// a hosted embedding model.
Embedding deterministic_embed(std::string_view text, std::size_t dim = kDefaultDim);

enum class Provider { RemoteHttp, DeterministicLocal };

struct EmbedderConfig {
  Provider provider = Provider::DeterministicLocal;
  std::string endpoint;
  std::string model_name;
  std::string api_key;
  std::string auth_header = "Authorization";
  std::size_t dim = kDefaultDim;
  std::chrono::milliseconds timeout{30000};
  std::size_t batch_size = 32;
  std::size_t max_in_flight = 4;
  http::RetryPolicy retry;

  /// Remote when EMBED_ENDPOINT is set, deterministic otherwise.
  static EmbedderConfig from_env();
  void validate() const;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  /// One unit vector per text, order-preserving.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) const = 0;
  Embedding embed_one(const std::string& text) const { return embed({text}).front(); }
};

class DeterministicEmbedder : public Embedder {
 public:
  explicit DeterministicEmbedder(std::size_t dim = kDefaultDim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override;

 private:
  std::size_t dim_;
};

/// POSTs {"model", "input"} and expects {"data": [{"embedding": [...]}]}.
class RemoteEmbedder : public Embedder {
 public:
  RemoteEmbedder(EmbedderConfig config, std::shared_ptr<http::Client> client,
                 std::shared_ptr<http::Clock> clock = http::system_clock());
  std::size_t dim() const override { return config_.dim; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override;

 private:
  std::vector<Embedding> embed_batch(std::span<const std::string> batch) const;

  EmbedderConfig config_;
  std::shared_ptr<http::Client> client_;
  std::shared_ptr<http::Clock> clock_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg,
                                        std::shared_ptr<http::Client> client = nullptr);

/// Validates inputs and dispatches to the configured provider.
std::vector<Embedding> embed_texts(const std::vector<std::string>& texts, const Embedder& embedder);
std::vector<Embedding> embed_texts(const std::vector<std::string>& texts, const EmbedderConfig& cfg);

}  // namespace evrag::embedding
