#include "evrag/pubmed.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <spdlog/spdlog.h>

#include "evrag/error.hpp"
#include "text_util.hpp"

namespace evrag::pubmed {

using nlohmann::json;
namespace pt = boost::property_tree;

void LitQuery::validate() const {
  if (detail::trim(term).empty()) throw Error(ErrorCode::InvalidArgument, "empty search term");
  if (max_results < 1) throw Error(ErrorCode::InvalidArgument, "max_results must be >= 1");
  if (years_back < 0) throw Error(ErrorCode::InvalidArgument, "years_back must be >= 0");
}

std::string LitQuery::cache_key() const {
  return term + '\x1f' + std::to_string(max_results) + '\x1f' + std::to_string(years_back) + '\x1f' +
         (prefer_reviews ? "1" : "0");
}

std::string article_url(std::string_view pmid) {
  return "https://pubmed.ncbi.nlm.nih.gov/" + std::string(pmid) + "/";
}

json to_json(const Article& a) {
  return json{{"pmid", a.pmid},       {"title", a.title},   {"authors", a.authors},
              {"journal", a.journal}, {"year", a.year},     {"abstract", a.abstract_text},
              {"is_review", a.is_review}, {"url", a.url}};
}

Article article_from_json(const json& j) {
  Article a;
  a.pmid = j.at("pmid").get<std::string>();
  a.title = j.value("title", "");
  a.authors = j.value("authors", std::vector<std::string>{});
  a.journal = j.value("journal", "");
  a.year = j.value("year", 0);
  a.abstract_text = j.value("abstract", "");
  a.is_review = j.value("is_review", false);
  a.url = j.value("url", article_url(a.pmid));
  return a;
}

// ---------------------------------------------------------------------------
// dates

std::string to_iso(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Date parse_iso_date(std::string_view s) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (s.size() != 10 || std::sscanf(std::string(s).c_str(), "%4d-%2u-%2u", &y, &m, &d) != 3) {
    throw Error(ErrorCode::InvalidArgument, "expected YYYY-MM-DD, got '" + std::string(s) + "'");
  }
  Date date{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
  if (!date.ok()) throw Error(ErrorCode::InvalidArgument, "invalid date '" + std::string(s) + "'");
  return date;
}

Date today_utc() {
  return Date{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())};
}

namespace {

Date years_before(Date d, int years) {
  Date shifted{d.year() - std::chrono::years(years), d.month(), d.day()};
  if (!shifted.ok()) {
    // Feb 29 in a non-leap year.
    shifted = Date{shifted.year() / shifted.month() / std::chrono::last};
  }
  return shifted;
}

std::string eutils_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d/%02u/%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::string trim_slash(std::string_view base) {
  std::string b(base);
  while (!b.empty() && b.back() == '/') b.pop_back();
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// request construction

std::string RequestDescriptor::param(std::string_view name) const {
  for (const auto& [k, v] : params) {
    if (k == name) return v;
  }
  return {};
}

std::string RequestDescriptor::url() const {
  std::string out = endpoint;
  char sep = '?';
  for (const auto& [k, v] : params) {
    out += sep;
    out += http::percent_encode(k);
    out += '=';
    out += http::percent_encode(v);
    sep = '&';
  }
  return out;
}

RequestDescriptor build_search_request(const LitQuery& q, Date today, std::string_view base_url,
                                       std::string_view api_key) {
  q.validate();
  RequestDescriptor r;
  r.endpoint = trim_slash(base_url) + "/esearch.fcgi";
  r.max_date = today;
  r.min_date = years_before(today, q.years_back);

  std::string term = q.term;
  if (q.prefer_reviews) {
    // Soft preference: the review clause widens nothing and filters nothing;
    // ranking does the prioritizing.
    term = "(" + q.term + ") OR ((" + q.term + ") AND (systematic review[pt] OR review[pt]))";
  }
  r.params = {{"db", "pubmed"},
              {"term", term},
              {"retmax", std::to_string(q.max_results * kOversample)},
              {"retmode", "json"},
              {"sort", "relevance"},
              {"datetype", "pdat"},
              {"mindate", eutils_date(r.min_date)},
              {"maxdate", eutils_date(r.max_date)}};
  if (!api_key.empty()) r.params.emplace_back("api_key", std::string(api_key));
  return r;
}

RequestDescriptor build_fetch_request(const std::vector<std::string>& pmids, std::string_view base_url,
                                      std::string_view api_key) {
  RequestDescriptor r;
  r.endpoint = trim_slash(base_url) + "/efetch.fcgi";
  std::string ids;
  for (const auto& id : pmids) {
    if (!ids.empty()) ids += ',';
    ids += id;
  }
  r.params = {{"db", "pubmed"}, {"id", ids}, {"retmode", "xml"}, {"rettype", "abstract"}};
  if (!api_key.empty()) r.params.emplace_back("api_key", std::string(api_key));
  return r;
}

// ---------------------------------------------------------------------------
// response parsing

namespace {

bool is_pmid(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

std::vector<std::string> parse_esearch(std::string_view body) {
  json root;
  try {
    root = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("esearch: ") + e.what());
  }
  if (!root.is_object() || !root.contains("esearchresult")) {
    throw Error(ErrorCode::ParseError, "esearch: missing esearchresult");
  }
  const auto& result = root.at("esearchresult");
  if (result.contains("ERROR")) {
    throw Error(ErrorCode::ParseError, "esearch: " + result.at("ERROR").dump());
  }
  if (!result.contains("idlist") || !result.at("idlist").is_array()) {
    throw Error(ErrorCode::ParseError, "esearch: missing idlist");
  }
  std::vector<std::string> ids;
  for (const auto& id : result.at("idlist")) {
    if (!id.is_string() || !is_pmid(id.get<std::string>())) {
      throw Error(ErrorCode::ParseError, "esearch: bad id " + id.dump());
    }
    ids.push_back(id.get<std::string>());
  }
  return ids;
}

namespace {

// With no_concat_text, text runs are "<xmltext>" children interleaved with
// inline elements (<i>, <sup>), so document order survives.
void flatten(const pt::ptree& node, std::string& out) {
  out += node.data();
  for (const auto& [key, child] : node) {
    if (key == "<xmlattr>" || key == "<xmlcomment>") continue;
    if (key == "<xmltext>") {
      out += child.data();
    } else {
      flatten(child, out);
    }
  }
}

std::string text_of(const pt::ptree& node) {
  std::string raw;
  flatten(node, raw);
  std::string out;
  bool space = false;
  for (char c : raw) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
      space = true;
    } else {
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::string child_text(const pt::ptree& node, const std::string& path) {
  const auto child = node.get_child_optional(pt::ptree::path_type(path, '/'));
  return child ? text_of(*child) : std::string{};
}

int leading_year(std::string_view s) {
  for (std::size_t i = 0; i + 4 <= s.size(); ++i) {
    if (std::all_of(s.begin() + i, s.begin() + i + 4, [](char c) { return c >= '0' && c <= '9'; })) {
      return std::atoi(std::string(s.substr(i, 4)).c_str());
    }
  }
  return 0;
}

int article_year(const pt::ptree& citation, const pt::ptree& pubmed_article) {
  const std::string pub_date = "Article/Journal/JournalIssue/PubDate";
  if (int y = leading_year(child_text(citation, pub_date + "/Year")); y != 0) return y;
  if (int y = leading_year(child_text(citation, pub_date + "/MedlineDate")); y != 0) return y;
  if (int y = leading_year(child_text(citation, "Article/ArticleDate/Year")); y != 0) return y;
  if (const auto history = pubmed_article.get_child_optional(pt::ptree::path_type("PubmedData/History", '/'))) {
    for (const auto& [key, date] : *history) {
      if (key != "PubMedPubDate") continue;
      if (int y = leading_year(child_text(date, "Year")); y != 0) return y;
    }
  }
  return 0;
}

std::string author_name(const pt::ptree& author) {
  if (auto collective = child_text(author, "CollectiveName"); !collective.empty()) return collective;
  const auto last = child_text(author, "LastName");
  auto first = child_text(author, "ForeName");
  if (first.empty()) first = child_text(author, "Initials");
  if (first.empty()) return last;
  if (last.empty()) return first;
  return first + " " + last;
}

}  // namespace

ParsedArticles parse_efetch(std::string_view body) {
  pt::ptree root;
  try {
    std::istringstream in{std::string(body)};
    pt::read_xml(in, root, pt::xml_parser::no_concat_text | pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::ParseError, std::string("efetch: ") + e.what());
  }
  const auto set = root.get_child_optional("PubmedArticleSet");
  if (!set) throw Error(ErrorCode::ParseError, "efetch: missing PubmedArticleSet");

  const int max_year = static_cast<int>(today_utc().year()) + 1;
  ParsedArticles out;
  for (const auto& [key, item] : *set) {
    if (key != "PubmedArticle") continue;
    const auto citation = item.get_child_optional("MedlineCitation");
    if (!citation) throw Error(ErrorCode::ParseError, "efetch: PubmedArticle without MedlineCitation");
    Article a;
    a.pmid = child_text(*citation, "PMID");
    if (!is_pmid(a.pmid)) throw Error(ErrorCode::ParseError, "efetch: bad PMID '" + a.pmid + "'");
    a.url = article_url(a.pmid);
    a.title = child_text(*citation, "Article/ArticleTitle");
    a.journal = child_text(*citation, "Article/Journal/Title");
    a.year = article_year(*citation, item);
    if (a.year < 1800 || a.year > max_year) {
      out.warnings.push_back("PMID " + a.pmid + ": no plausible publication year, skipped");
      continue;
    }
    if (const auto authors = citation->get_child_optional(pt::ptree::path_type("Article/AuthorList", '/'))) {
      for (const auto& [akey, author] : *authors) {
        if (akey != "Author") continue;
        if (auto name = author_name(author); !name.empty()) a.authors.push_back(std::move(name));
      }
    }
    if (const auto abstract = citation->get_child_optional(pt::ptree::path_type("Article/Abstract", '/'))) {
      for (const auto& [akey, section] : *abstract) {
        if (akey != "AbstractText") continue;
        std::string text = text_of(section);
        const auto label = section.get_optional<std::string>("<xmlattr>.Label");
        if (label && !label->empty()) text = *label + ": " + text;
        if (!a.abstract_text.empty()) a.abstract_text += "\n";
        a.abstract_text += text;
      }
    }
    if (a.abstract_text.empty()) out.warnings.push_back("PMID " + a.pmid + ": no abstract");
    if (const auto types = citation->get_child_optional(pt::ptree::path_type("Article/PublicationTypeList", '/'))) {
      for (const auto& [tkey, type] : *types) {
        if (tkey != "PublicationType") continue;
        const auto name = text_of(type);
        if (name.find("Review") != std::string::npos || name == "Meta-Analysis") a.is_review = true;
      }
    }
    out.articles.push_back(std::move(a));
  }
  return out;
}

std::vector<Article> rank_articles(std::vector<Article> articles, const LitQuery& q) {
  std::stable_sort(articles.begin(), articles.end(), [](const Article& a, const Article& b) {
    if (a.is_review != b.is_review) return a.is_review;
    return a.year > b.year;
  });
  if (articles.size() > q.max_results) articles.resize(q.max_results);
  return articles;
}

// ---------------------------------------------------------------------------
// rate limiter

RateLimiter::RateLimiter(std::size_t per_second, std::shared_ptr<http::Clock> clock)
    : per_second_(std::max<std::size_t>(1, per_second)), clock_(std::move(clock)) {}

void RateLimiter::acquire() {
  std::lock_guard lock(mutex_);
  constexpr auto kWindow = std::chrono::seconds(1);
  for (;;) {
    const auto now = clock_->now();
    while (!recent_.empty() && recent_.front() + kWindow <= now) recent_.pop_front();
    if (recent_.size() < per_second_) {
      recent_.push_back(now);
      return;
    }
    const auto wait = std::chrono::ceil<std::chrono::milliseconds>(recent_.front() + kWindow - now);
    clock_->sleep_for(std::max(wait, std::chrono::milliseconds(1)));
  }
}

// ---------------------------------------------------------------------------
// client

ClientConfig ClientConfig::from_env() {
  ClientConfig cfg;
  if (const char* key = std::getenv("NCBI_API_KEY"); key != nullptr && *key != '\0') cfg.api_key = key;
  if (const char* base = std::getenv("NCBI_BASE_URL"); base != nullptr && *base != '\0') cfg.base_url = base;
  return cfg;
}

LitClient::LitClient(ClientConfig config, std::shared_ptr<http::Client> transport,
                     std::shared_ptr<http::Clock> clock, std::function<Date()> today)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      clock_(std::move(clock)),
      today_(std::move(today)),
      // NCBI policy: 3 requests/s without a key, 10 with one.
      limiter_(config_.api_key.empty() ? 3 : 10, clock_) {}

std::string LitClient::call(const RequestDescriptor& request) {
  http::Request req;
  req.method = "GET";
  req.url = request.url();
  req.timeout = config_.timeout;

  auto backoff = config_.retry.initial_backoff;
  std::string last_error;
  bool rate_limited = false;
  for (int attempt = 1; attempt <= config_.retry.attempts; ++attempt) {
    limiter_.acquire();
    ++transport_calls_;
    try {
      const auto resp = transport_->send(req);
      if (resp.status >= 200 && resp.status < 300) return resp.body;
      rate_limited = resp.status == 429;
      last_error = "HTTP " + std::to_string(resp.status);
      if (!rate_limited && resp.status < 500) break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError) throw;
      rate_limited = false;
      last_error = e.what();
    }
    if (attempt < config_.retry.attempts) {
      spdlog::warn("literature request failed ({}), retrying in {} ms", last_error, backoff.count());
      clock_->sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(rate_limited ? ErrorCode::RateLimited : ErrorCode::TransportError,
              request.endpoint + ": " + last_error);
}

std::vector<std::string> LitClient::search(const LitQuery& q) {
  return parse_esearch(call(build_search_request(q, today_(), config_.base_url, config_.api_key)));
}

std::vector<Article> LitClient::fetch_articles(const std::vector<std::string>& pmids) {
  if (pmids.empty()) throw Error(ErrorCode::InvalidArgument, "no PMIDs to fetch");
  std::vector<Article> fetched;
  for (std::size_t start = 0; start < pmids.size(); start += kFetchBatch) {
    const std::vector<std::string> batch(
        pmids.begin() + static_cast<std::ptrdiff_t>(start),
        pmids.begin() + static_cast<std::ptrdiff_t>(std::min(pmids.size(), start + kFetchBatch)));
    auto parsed = parse_efetch(call(build_fetch_request(batch, config_.base_url, config_.api_key)));
    for (const auto& w : parsed.warnings) spdlog::warn("efetch: {}", w);
    for (auto& a : parsed.articles) fetched.push_back(std::move(a));
  }
  // Keep the caller's (search relevance) order.
  std::vector<Article> ordered;
  ordered.reserve(fetched.size());
  for (const auto& id : pmids) {
    const auto it = std::find_if(fetched.begin(), fetched.end(), [&](const Article& a) { return a.pmid == id; });
    if (it != fetched.end()) ordered.push_back(*it);
  }
  return ordered;
}

std::vector<Article> LitClient::find(const LitQuery& q) {
  q.validate();
  const auto key = q.cache_key();
  {
    std::lock_guard lock(cache_mutex_);
    const auto it = cache_.find(key);
    if (it != cache_.end() && clock_->now() - it->second.stored < config_.cache_ttl) {
      return it->second.articles;
    }
  }
  const auto ids = search(q);
  std::vector<Article> ranked;
  if (!ids.empty()) ranked = rank_articles(fetch_articles(ids), q);
  std::lock_guard lock(cache_mutex_);
  cache_[key] = CacheEntry{clock_->now(), ranked};
  return ranked;
}

}  // namespace evrag::pubmed
