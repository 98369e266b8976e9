#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evrag/http.hpp"

namespace evrag::pubmed {

using Date = std::chrono::year_month_day;

inline constexpr std::size_t kOversample = 3;
inline constexpr std::size_t kFetchBatch = 50;
inline constexpr std::string_view kDefaultBaseUrl = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";

struct LitQuery {
  std::string term;
  std::size_t max_results = 3;
  int years_back = 5;
  bool prefer_reviews = true;

  void validate() const;
  std::string cache_key() const;
};

struct Article {
  std::string pmid;
  std::string title;
  std::vector<std::string> authors;
  std::string journal;
  int year = 0;
  std::string abstract_text;
  bool is_review = false;
  std::string url;

  bool operator==(const Article&) const = default;
};

std::string article_url(std::string_view pmid);
nlohmann::json to_json(const Article& a);
Article article_from_json(const nlohmann::json& j);

std::string to_iso(Date d);
Date parse_iso_date(std::string_view s);
Date today_utc();

struct RequestDescriptor {
  std::string endpoint;
  std::vector<std::pair<std::string, std::string>> params;
  Date min_date{};
  Date max_date{};

  std::string param(std::string_view name) const;
  std::string url() const;
};

RequestDescriptor build_search_request(const LitQuery& q, Date today,
                                       std::string_view base_url = kDefaultBaseUrl,
                                       std::string_view api_key = {});
RequestDescriptor build_fetch_request(const std::vector<std::string>& pmids,
                                      std::string_view base_url = kDefaultBaseUrl,
                                      std::string_view api_key = {});

/// Ids from an esearch JSON body, in response order. Throws ParseError.
std::vector<std::string> parse_esearch(std::string_view body);

struct ParsedArticles {
  std::vector<Article> articles;
  std::vector<std::string> warnings;
};
/// Records from an efetch XML body. Throws ParseError.
ParsedArticles parse_efetch(std::string_view body);

/// Stable sort by (review first, newer first, input order), truncated.
std::vector<Article> rank_articles(std::vector<Article> articles, const LitQuery& q);

/// At most `per_second` acquisitions in any one-second window.
class RateLimiter {
 public:
  RateLimiter(std::size_t per_second, std::shared_ptr<http::Clock> clock);
  void acquire();
  std::size_t per_second() const { return per_second_; }

 private:
  std::size_t per_second_;
  std::shared_ptr<http::Clock> clock_;
  std::mutex mutex_;
  std::deque<http::Clock::time_point> recent_;
};

struct ClientConfig {
  std::string base_url{kDefaultBaseUrl};
  std::string api_key;
  std::chrono::milliseconds cache_ttl{std::chrono::minutes(15)};
  std::chrono::milliseconds timeout{15000};
  http::RetryPolicy retry;

  /// NCBI_API_KEY and NCBI_BASE_URL.
  static ClientConfig from_env();
};

class LitClient {
 public:
  LitClient(ClientConfig config, std::shared_ptr<http::Client> transport,
            std::shared_ptr<http::Clock> clock = http::system_clock(),
            std::function<Date()> today = today_utc);

  std::vector<std::string> search(const LitQuery& q);
  std::vector<Article> fetch_articles(const std::vector<std::string>& pmids);
  /// search + fetch + rank, cached per query for the configured TTL.
  std::vector<Article> find(const LitQuery& q);

  std::size_t transport_calls() const { return transport_calls_.load(); }
  const ClientConfig& config() const { return config_; }

 private:
  std::string call(const RequestDescriptor& request);

  struct CacheEntry {
    http::Clock::time_point stored;
    std::vector<Article> articles;
  };

  ClientConfig config_;
  std::shared_ptr<http::Client> transport_;
  std::shared_ptr<http::Clock> clock_;
  std::function<Date()> today_;
  RateLimiter limiter_;
  std::atomic<std::size_t> transport_calls_{0};
  std::mutex cache_mutex_;
  std::map<std::string, CacheEntry> cache_;
};

}  // namespace evrag::pubmed
