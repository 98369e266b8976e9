#include "evrag/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <future>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evrag/error.hpp"
#include "evrag/kernels.hpp"
#include "text_util.hpp"

namespace evrag::embedding {

using nlohmann::json;

double Embedding::norm() const {
  double sq = 0.0;
  for (float v : values_) sq += static_cast<double>(v) * v;
  return std::sqrt(sq);
}

bool Embedding::is_unit(double tolerance) const { return std::abs(norm() - 1.0) <= tolerance; }

bool Embedding::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

void Embedding::normalize() {
  if (!kernels::normalize_rows_serial(values_, values_.size())) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a zero or non-finite vector");
  }
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double ab = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// deterministic embedder

namespace {

constexpr std::uint64_t kHashSeed = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_gram(const char32_t* gram, std::size_t n) {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ kHashSeed;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t cp = gram[i];
    for (int b = 0; b < 4; ++b) {
      h ^= (cp >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return mix64(h);
}

}  // namespace

Embedding deterministic_embed(std::string_view text, std::size_t dim) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  const auto trimmed = detail::trim(text);
  if (trimmed.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");

  std::u32string cps = U" ";
  for (char32_t c : detail::decode_utf8(trimmed)) {
    if (c < 0x80) c = static_cast<char32_t>(std::tolower(static_cast<int>(c)));
    cps.push_back(c);
  }
  cps.push_back(U' ');

  std::vector<float> acc(dim, 0.0f);
  for (std::size_t i = 0; i + 3 <= cps.size(); ++i) {
    const std::uint64_t h = hash_gram(cps.data() + i, 3);
    const std::size_t index = h % dim;
    acc[index] += (h >> 63) != 0 ? -1.0f : 1.0f;
  }
  Embedding out(std::move(acc));
  if (out.norm() == 0.0) {
    // Colliding trigrams cancelled out; fall back to a whole-text bucket.
    const std::uint64_t h = hash_gram(cps.data(), cps.size());
    out.mutable_values()[h % dim] = 1.0f;
  }
  out.normalize();
  return out;
}

std::vector<Embedding> DeterministicEmbedder::embed(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out(texts.size());
  // Validate serially so the first offending text is the one reported.
  for (const auto& t : texts) {
    if (detail::trim(t).empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  }
  const auto n = static_cast<long>(texts.size());
#pragma omp parallel for schedule(dynamic, 8) if (n > 64)
  for (long i = 0; i < n; ++i) out[i] = deterministic_embed(texts[i], dim_);
  return out;
}

// ---------------------------------------------------------------------------
// remote embedder

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

}  // namespace

EmbedderConfig EmbedderConfig::from_env() {
  EmbedderConfig cfg;
  cfg.endpoint = env_or("EMBED_ENDPOINT", "");
  cfg.model_name = env_or("EMBED_MODEL", "");
  cfg.api_key = env_or("EMBED_API_KEY", "");
  cfg.provider = cfg.endpoint.empty() ? Provider::DeterministicLocal : Provider::RemoteHttp;
  return cfg;
}

void EmbedderConfig::validate() const {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (provider == Provider::RemoteHttp && endpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "remote embedder needs an endpoint");
  }
}

RemoteEmbedder::RemoteEmbedder(EmbedderConfig config, std::shared_ptr<http::Client> client,
                               std::shared_ptr<http::Clock> clock)
    : config_(std::move(config)), client_(std::move(client)), clock_(std::move(clock)) {
  config_.validate();
}

std::vector<Embedding> RemoteEmbedder::embed_batch(std::span<const std::string> batch) const {
  http::Request req;
  req.method = "POST";
  req.url = config_.endpoint;
  req.timeout = config_.timeout;
  req.headers["Content-Type"] = "application/json";
  if (!config_.api_key.empty()) {
    req.headers[config_.auth_header] =
        config_.auth_header == "Authorization" ? "Bearer " + config_.api_key : config_.api_key;
  }
  req.body = json{{"model", config_.model_name},
                  {"input", std::vector<std::string>(batch.begin(), batch.end())}}
                 .dump();

  std::string last_error;
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 1; attempt <= config_.retry.attempts; ++attempt) {
    try {
      const auto resp = client_->send(req);
      if (resp.status >= 200 && resp.status < 300) {
        json body;
        try {
          body = json::parse(resp.body);
        } catch (const json::exception& e) {
          throw Error(ErrorCode::ProviderUnavailable, std::string("unparseable response: ") + e.what());
        }
        const auto& data = body.at("data");
        if (data.size() != batch.size()) {
          throw Error(ErrorCode::ProviderUnavailable, "provider returned " +
                                                          std::to_string(data.size()) + " vectors for " +
                                                          std::to_string(batch.size()) + " inputs");
        }
        std::vector<Embedding> out(batch.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
          const std::size_t slot = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
          if (slot >= out.size()) throw Error(ErrorCode::ProviderUnavailable, "bad index in response");
          auto values = data[i].at("embedding").get<std::vector<float>>();
          if (values.size() != config_.dim) {
            throw Error(ErrorCode::DimensionMismatch, "provider returned " +
                                                          std::to_string(values.size()) +
                                                          " dims, expected " + std::to_string(config_.dim));
          }
          Embedding e(std::move(values));
          if (!e.all_finite()) throw Error(ErrorCode::ProviderUnavailable, "non-finite embedding");
          e.normalize();
          out[slot] = std::move(e);
        }
        return out;
      }
      last_error = "HTTP " + std::to_string(resp.status);
      if (resp.status != 429 && resp.status < 500) break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError) throw;
      last_error = e.what();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ProviderUnavailable, std::string("malformed response: ") + e.what());
    }
    if (attempt < config_.retry.attempts) {
      spdlog::warn("embedding request failed ({}), retrying in {} ms", last_error, backoff.count());
      clock_->sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::ProviderUnavailable, "embedding provider failed: " + last_error);
}

std::vector<Embedding> RemoteEmbedder::embed(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  const std::size_t batch = config_.batch_size;
  const std::size_t in_flight = std::max<std::size_t>(1, config_.max_in_flight);
  std::size_t next = 0;
  while (next < texts.size()) {
    std::vector<std::future<std::vector<Embedding>>> wave;
    for (std::size_t w = 0; w < in_flight && next < texts.size(); ++w) {
      const std::size_t len = std::min(batch, texts.size() - next);
      std::span<const std::string> slice(texts.data() + next, len);
      wave.push_back(std::async(std::launch::async, [this, slice] { return embed_batch(slice); }));
      next += len;
    }
    for (auto& f : wave) {
      for (auto& e : f.get()) out.push_back(std::move(e));
    }
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg,
                                        std::shared_ptr<http::Client> client) {
  cfg.validate();
  if (cfg.provider == Provider::DeterministicLocal) {
    return std::make_unique<DeterministicEmbedder>(cfg.dim);
  }
  return std::make_unique<RemoteEmbedder>(cfg, client ? std::move(client) : http::default_client());
}

std::vector<Embedding> embed_texts(const std::vector<std::string>& texts, const Embedder& embedder) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "no texts to embed");
  for (const auto& t : texts) {
    if (detail::trim(t).empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  }
  auto out = embedder.embed(texts);
  if (out.size() != texts.size()) {
    throw Error(ErrorCode::ProviderUnavailable, "embedder returned the wrong number of vectors");
  }
  return out;
}

std::vector<Embedding> embed_texts(const std::vector<std::string>& texts, const EmbedderConfig& cfg) {
  return embed_texts(texts, *make_embedder(cfg));
}

}  // namespace evrag::embedding
