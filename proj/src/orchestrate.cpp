#include "evrag/orchestrate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <future>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "evrag/error.hpp"
#include "text_util.hpp"

namespace evrag::orchestrate {

namespace {

const std::map<std::string, std::string, std::less<>>& prompt_table() {
  static const std::map<std::string, std::string, std::less<>> table = [] {
    std::map<std::string, std::string, std::less<>> t{
#include "evrag_prompts.inc"
    };
    for (auto& [name, text] : t) {
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    }
    return t;
  }();
  return table;
}

}  // namespace

std::string prompt_template(std::string_view name) {
  const auto& table = prompt_table();
  auto it = table.find(name);
  if (it == table.end()) throw Error(ErrorCode::NotFound, "no prompt template '" + std::string(name) + "'");
  return it->second;
}

std::string_view to_string(Role r) { return r == Role::User ? "user" : "assistant"; }

std::string_view to_string(SourceKind k) {
  return k == SourceKind::LocalRegulatory ? "local_regulatory" : "literature";
}

std::string_view to_string(Route r) {
  switch (r) {
    case Route::Regulatory: return "regulatory";
    case Route::Scientific: return "scientific";
    case Route::Mixed: return "mixed";
  }
  return "mixed";
}

namespace {

Role parse_role(const std::string& s) {
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(ErrorCode::InvalidArgument, "unknown role '" + s + "'");
}

SourceKind parse_source_kind(const std::string& s) {
  if (s == "local_regulatory") return SourceKind::LocalRegulatory;
  if (s == "literature") return SourceKind::Literature;
  throw Error(ErrorCode::InvalidArgument, "unknown source kind '" + s + "'");
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

json to_json(const RetrievedEvidence& e) {
  json j{{"source_kind", to_string(e.source_kind)},
         {"ref", e.ref},
         {"display_title", e.display_title},
         {"score", e.score},
         {"weight", e.weight},
         {"snippet", e.snippet}};
  if (e.article) j["article"] = pubmed::to_json(*e.article);
  return j;
}

RetrievedEvidence evidence_from_json(const json& j) {
  RetrievedEvidence e;
  e.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
  e.ref = j.at("ref").get<std::string>();
  e.display_title = j.value("display_title", "");
  e.score = j.value("score", 0.0);
  e.weight = j.value("weight", 0.0);
  e.snippet = j.value("snippet", "");
  if (j.contains("article") && !j.at("article").is_null()) e.article = pubmed::article_from_json(j.at("article"));
  return e;
}

json to_json(const ConversationTurn& t) {
  json evidence = json::array();
  for (const auto& e : t.evidence) evidence.push_back(to_json(e));
  json j{{"turn_id", t.turn_id},   {"role", to_string(t.role)},
         {"text", t.text},         {"timestamp", t.timestamp},
         {"evidence", evidence},   {"cited_markers", t.cited_markers},
         {"degraded", t.degraded}, {"clarification", t.clarification}};
  if (t.reformulated_query) j["reformulated_query"] = *t.reformulated_query;
  if (t.reasoning_trace) j["reasoning_trace"] = *t.reasoning_trace;
  if (t.error) j["error"] = *t.error;
  return j;
}

ConversationTurn turn_from_json(const json& j) {
  ConversationTurn t;
  t.turn_id = j.at("turn_id").get<int>();
  t.role = parse_role(j.at("role").get<std::string>());
  t.text = j.at("text").get<std::string>();
  t.timestamp = j.value("timestamp", "");
  if (j.contains("evidence")) {
    for (const auto& e : j.at("evidence")) t.evidence.push_back(evidence_from_json(e));
  }
  t.reformulated_query = optional_field<std::string>(j, "reformulated_query");
  t.reasoning_trace = optional_field<std::string>(j, "reasoning_trace");
  t.cited_markers = j.value("cited_markers", std::vector<int>{});
  t.degraded = j.value("degraded", false);
  t.clarification = j.value("clarification", false);
  t.error = optional_field<std::string>(j, "error");
  return t;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// ---------------------------------------------------------------------------
// entity heuristics

namespace {

struct Word {
  std::string text;   // surface form
  std::string lower;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool breaks_before = false;  // punctuation separates it from the previous word
};

bool word_byte(unsigned char c) { return std::isalnum(c) || c == '-' || c == '\'' || c >= 0x80; }

std::vector<Word> tokenize(std::string_view text) {
  std::vector<Word> words;
  bool pending_break = false;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (!word_byte(c)) {
      if (!std::isspace(c)) pending_break = true;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && word_byte(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t b = i;
    std::size_t e = j;
    while (b < e && (text[b] == '\'' || text[b] == '-')) ++b;
    while (e > b && (text[e - 1] == '\'' || text[e - 1] == '-')) --e;
    if (b < e) {
      Word w;
      w.text = std::string(text.substr(b, e - b));
      w.lower = detail::to_lower_ascii(w.text);
      w.begin = b;
      w.end = e;
      w.breaks_before = pending_break;
      words.push_back(std::move(w));
    }
    pending_break = false;
    i = j;
  }
  return words;
}

std::string strip_possessive(std::string s) {
  if (s.size() > 2 && (s.ends_with("'s") || s.ends_with("'S"))) s.resize(s.size() - 2);
  return s;
}

const std::set<std::string, std::less<>>& stop_words() {
  static const std::set<std::string, std::less<>> words{
      // function words
      "a", "an", "the", "and", "or", "but", "nor", "of", "in", "on", "at", "to", "for", "from", "by", "with",
      "about", "as", "into", "than", "then", "between", "among", "over", "under", "after", "before", "during",
      "without", "within", "through", "against", "versus", "vs", "per", "via", "if", "so", "not", "no", "yes",
      "also", "too", "very", "more", "most", "less", "least", "much", "many", "some", "any", "all", "each",
      "every", "other", "another", "such", "same", "only", "just", "even", "still", "both", "either", "neither",
      // pronouns and determiners
      "i", "me", "my", "mine", "we", "us", "our", "you", "your", "he", "him", "his", "she", "her", "hers",
      "it", "its", "they", "them", "their", "theirs", "this", "that", "these", "those", "there", "here",
      "one", "ones", "someone", "something", "anything", "everything",
      // question words and auxiliaries
      "what", "which", "who", "whom", "whose", "when", "where", "why", "how", "is", "are", "was", "were", "be",
      "been", "being", "am", "do", "does", "did", "doing", "done", "have", "has", "had", "having", "can",
      "could", "will", "would", "shall", "should", "may", "might", "must",
      // conversational verbs
      "tell", "explain", "describe", "know", "want", "like", "please", "thanks", "thank", "compare", "compared",
      "comparison", "mean", "means", "get", "gets", "make", "makes", "give", "say", "says", "said", "think",
      "happen", "happens", "affect", "affects", "cause", "causes", "work", "works", "used", "using", "take",
      "taking", "taken",
      // generic domain words that do not name a substance or topic
      "schedule", "scheduled", "scheduling", "classification", "classified", "class", "effect", "effects",
      "health", "risk", "risks", "use", "uses", "user", "users", "common", "commonly", "danger", "dangers",
      "dangerous", "drug", "drugs", "substance", "substances", "information", "info", "question", "answer",
      "long-term", "short-term", "term", "lot", "kind", "kinds", "type", "types", "way", "ways", "thing",
      "things", "people", "person", "today", "now", "current", "currently", "legal", "status", "difference",
      "differences", "similar", "different", "main", "major", "new", "old", "big", "small", "high", "low",
      "good", "bad", "well", "really", "exactly", "particularly", "especially", "often", "usually"};
  return words;
}

bool is_stop(const std::string& lower) {
  if (stop_words().contains(lower)) return true;
  if (lower.size() > 2 && lower.ends_with("'s") && stop_words().contains(lower.substr(0, lower.size() - 2))) {
    return true;
  }
  return std::all_of(lower.begin(), lower.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string lower_key(const std::string& s) { return detail::to_lower_ascii(s); }

}  // namespace

std::vector<std::string> salient_entities(std::string_view text) {
  const auto words = tokenize(text);
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::string phrase;
  auto flush = [&] {
    if (phrase.empty()) return;
    phrase = strip_possessive(phrase);
    if (seen.insert(lower_key(phrase)).second) out.push_back(phrase);
    phrase.clear();
  };
  for (const auto& w : words) {
    if (w.breaks_before) flush();
    if (is_stop(w.lower)) {
      flush();
      continue;
    }
    if (!phrase.empty()) phrase += ' ';
    phrase += w.text;
    // A possessive ends the noun phrase ("fentanyl's effects").
    if (w.lower.ends_with("'s")) flush();
  }
  flush();
  return out;
}

bool has_anaphora(std::string_view question, const ReformulatorConfig& cfg) {
  for (const auto& w : tokenize(question)) {
    for (const auto& m : cfg.anaphora_markers) {
      if (w.lower == detail::to_lower_ascii(m)) return true;
    }
  }
  return false;
}

namespace {

struct Candidates {
  std::vector<std::string> entities;  // from the most recent turn that names any
};

// Most recent user turn (within the window) that introduces an entity not
// already present in the question itself.
Candidates recent_entities(const std::vector<ConversationTurn>& history, std::string_view question,
                           const ReformulatorConfig& cfg) {
  std::set<std::string> in_question;
  for (const auto& e : salient_entities(question)) in_question.insert(lower_key(e));
  const std::size_t window = std::min(cfg.context_turns, history.size());
  for (std::size_t back = 1; back <= window; ++back) {
    const auto& turn = history[history.size() - back];
    if (turn.role != Role::User) continue;
    // Prefer the standalone rewrite recorded on the following assistant turn.
    std::string text = turn.text;
    const std::size_t idx = history.size() - back;
    if (idx + 1 < history.size() && history[idx + 1].role == Role::Assistant &&
        history[idx + 1].reformulated_query && !history[idx + 1].clarification) {
      text = *history[idx + 1].reformulated_query;
    }
    Candidates c;
    for (auto& e : salient_entities(text)) {
      if (!in_question.contains(lower_key(e))) c.entities.push_back(std::move(e));
    }
    if (!c.entities.empty()) return c;
  }
  return {};
}

std::string substitute_entity(std::string_view question, const std::string& entity, const ReformulatorConfig& cfg) {
  for (const auto& w : tokenize(question)) {
    for (const auto& m : cfg.anaphora_markers) {
      const auto marker = detail::to_lower_ascii(m);
      if (w.lower != marker) continue;
      std::string replacement = entity;
      if (marker == "its" || marker == "their") replacement += "'s";
      return std::string(question.substr(0, w.begin)) + replacement + std::string(question.substr(w.end));
    }
  }
  return std::string(question);
}

std::string fallback_rewrite(const std::vector<ConversationTurn>& history, std::string_view question,
                             const ReformulatorConfig& cfg) {
  const auto c = recent_entities(history, question, cfg);
  if (c.entities.size() != 1) return std::string(question);
  return substitute_entity(question, c.entities.front(), cfg);
}

std::vector<ChatMessage> reformulation_messages(const std::vector<ConversationTurn>& history,
                                                std::string_view question, const ReformulatorConfig& cfg) {
  std::vector<ChatMessage> messages{{"system", prompt_template("reformulate_v1")}};
  const std::size_t window = std::min(cfg.context_turns, history.size());
  for (std::size_t i = history.size() - window; i < history.size(); ++i) {
    messages.push_back({std::string(to_string(history[i].role)), history[i].text});
  }
  messages.push_back({"user", std::string(question)});
  return messages;
}

}  // namespace

Reformulation reformulate_query(const std::vector<ConversationTurn>& history, std::string_view question,
                                LlmProvider* llm, const ReformulatorConfig& cfg) {
  if (detail::trim(question).empty()) throw Error(ErrorCode::InvalidArgument, "question is empty");
  Reformulation r;
  r.standalone_question = std::string(question);
  if (history.empty() || !has_anaphora(question, cfg)) return r;

  const auto c = recent_entities(history, question, cfg);
  if (c.entities.size() >= 2) {
    r.ambiguous = true;
    r.candidates = c.entities;
    return r;
  }

  if (llm != nullptr) {
    LlmPrompt prompt;
    prompt.task = LlmTask::Reformulate;
    prompt.messages = reformulation_messages(history, question, cfg);
    prompt.history = &history;
    prompt.question = std::string(question);
    try {
      auto reply = llm->complete(prompt);
      const auto text = detail::trim(reply.text);
      if (!text.empty()) {
        r.standalone_question = std::string(text);
        return r;
      }
      spdlog::warn("reformulation provider returned an empty rewrite, using fallback");
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ProviderUnavailable) throw;
      spdlog::warn("reformulation provider unavailable, using fallback: {}", e.what());
    }
  }
  r.used_fallback = true;
  r.standalone_question = fallback_rewrite(history, question, cfg);
  return r;
}

// ---------------------------------------------------------------------------
// routing

LexiconHits count_lexicon_hits(std::string_view question, const RouterConfig& cfg) {
  LexiconHits hits;
  auto matches = [](const std::string& word, const std::vector<std::string>& lexicon) {
    return std::any_of(lexicon.begin(), lexicon.end(),
                       [&](const std::string& stem) { return detail::starts_with_ci(word, stem); });
  };
  for (const auto& w : tokenize(question)) {
    if (matches(w.lower, cfg.regulatory)) ++hits.regulatory;
    if (matches(w.lower, cfg.scientific)) ++hits.scientific;
  }
  return hits;
}

SourceWeights route_sources(std::string_view question, const RouterConfig& cfg) {
  const auto hits = count_lexicon_hits(question, cfg);
  const double hi = cfg.dominant_weight;
  if (hits.regulatory > hits.scientific) return SourceWeights{hi, 1.0 - hi, Route::Regulatory};
  if (hits.scientific > hits.regulatory) return SourceWeights{1.0 - hi, hi, Route::Scientific};
  return SourceWeights{0.5, 0.5, Route::Mixed};
}

// ---------------------------------------------------------------------------
// retrieval

namespace {

RetrievedEvidence local_evidence(const vindex::SearchHit& hit, double w_local) {
  RetrievedEvidence e;
  e.source_kind = SourceKind::LocalRegulatory;
  e.ref = hit.item_id;
  e.score = hit.score;
  e.weight = std::max(0.0, w_local * hit.score);
  e.display_title = hit.item_id;
  const auto payload = json::parse(hit.payload, nullptr, false);
  if (payload.is_object()) {
    e.display_title = payload.value("title", hit.item_id);
    e.snippet = payload.value("text", "");
  } else {
    e.snippet = hit.payload;
  }
  return e;
}

RetrievedEvidence literature_evidence(const pubmed::Article& a, std::size_t rank, std::size_t k_lit, double w_lit) {
  RetrievedEvidence e;
  e.source_kind = SourceKind::Literature;
  e.ref = a.pmid;
  e.display_title = a.title;
  e.score = 1.0 - static_cast<double>(rank) / static_cast<double>(k_lit);
  e.weight = std::max(0.0, w_lit * e.score);
  e.snippet = a.abstract_text.empty() ? a.title : a.abstract_text;
  e.article = a;
  return e;
}

}  // namespace

DualRetrieval retrieve_dual(std::string_view question, const SourceWeights& weights, const RetrievalDeps& deps) {
  if (!deps.index) throw Error(ErrorCode::IndexUnavailable, "no vector index is loaded");
  if (deps.embedder == nullptr) throw Error(ErrorCode::IndexUnavailable, "no embedder is configured");
  DualRetrieval out;

  std::future<std::vector<pubmed::Article>> literature;
  const bool want_lit = deps.literature && deps.k_lit > 0 && weights.w_lit > 0.0;
  if (want_lit) {
    pubmed::LitQuery q;
    q.term = std::string(question);
    q.max_results = deps.k_lit;
    literature = std::async(std::launch::async, [client = deps.literature, q] { return client->find(q); });
  }

  std::vector<RetrievedEvidence> local;
  if (deps.k_local > 0 && weights.w_local > 0.0 && deps.index->size() > 0) {
    const auto query = deps.embedder->embed_one(std::string(question));
    for (const auto& hit : deps.index->search(query, deps.k_local)) {
      local.push_back(local_evidence(hit, weights.w_local));
    }
  }

  std::vector<RetrievedEvidence> lit;
  if (want_lit) {
    try {
      const auto articles = literature.get();
      for (std::size_t r = 0; r < articles.size(); ++r) {
        lit.push_back(literature_evidence(articles[r], r, deps.k_lit, weights.w_lit));
      }
    } catch (const std::exception& e) {
      spdlog::warn("literature retrieval failed, continuing with local sources: {}", e.what());
      out.degraded = true;
      out.warnings.push_back(std::string("literature unavailable: ") + e.what());
    }
  }

  out.evidence = std::move(local);
  out.evidence.insert(out.evidence.end(), std::make_move_iterator(lit.begin()), std::make_move_iterator(lit.end()));
  std::stable_sort(out.evidence.begin(), out.evidence.end(),
                   [](const RetrievedEvidence& a, const RetrievedEvidence& b) { return a.weight > b.weight; });
  return out;
}

// ---------------------------------------------------------------------------
// prompt and generation

namespace {

std::string truncate_snippet(std::string_view s) {
  const auto cps = detail::decode_utf8(s);
  if (cps.size() <= kSnippetLimit) return std::string(s);
  std::string out;
  for (std::size_t i = 0; i < kSnippetLimit; ++i) detail::append_utf8(out, cps[i]);
  return out + "...";
}

}  // namespace

std::string GenerationRequest::user_message() const {
  std::string msg = "Evidence:\n";
  if (evidence_block.empty()) msg += "(none)\n";
  for (const auto& line : evidence_block) msg += line + "\n";
  msg += "\nQuestion: " + question;
  return msg;
}

GenerationRequest compose_prompt(std::string_view question, const std::vector<RetrievedEvidence>& evidence) {
  GenerationRequest req;
  req.question = std::string(question);
  req.system_prompt = prompt_template("system_v1");
  if (evidence.empty()) req.system_prompt += "\n\n" + prompt_template("insufficient_v1");
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    const auto& e = evidence[i];
    req.evidence_block.push_back("[" + std::to_string(i + 1) + "] " + e.display_title + " (" +
                                 std::string(to_string(e.source_kind)) + "): " + truncate_snippet(e.snippet));
  }
  return req;
}

namespace {

struct MarkerSpan {
  std::size_t begin;
  std::size_t end;
  int value;
};

std::vector<MarkerSpan> scan_markers(std::string_view text) {
  std::vector<MarkerSpan> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[') continue;
    std::size_t j = i + 1;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])) && j - i <= 6) ++j;
    if (j == i + 1 || j >= text.size() || text[j] != ']') continue;
    out.push_back({i, j + 1, std::stoi(std::string(text.substr(i + 1, j - i - 1)))});
    i = j;
  }
  return out;
}

// Rendered first sentence of a snippet, for the offline answer template.
std::string lead_sentence(std::string_view snippet) {
  const auto line = snippet.substr(0, snippet.find('\n'));
  std::size_t end = line.size();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    if ((line[i] == '.' || line[i] == '!' || line[i] == '?') && line[i + 1] == ' ') {
      end = i + 1;
      break;
    }
  }
  return std::string(detail::trim(line.substr(0, end)));
}

// The snippet part of "[n] title (kind): snippet".
std::string_view entry_snippet(std::string_view entry) {
  const auto pos = entry.find("): ");
  return pos == std::string_view::npos ? entry : entry.substr(pos + 3);
}

}  // namespace

std::vector<int> find_markers(std::string_view text) {
  std::vector<int> out;
  for (const auto& m : scan_markers(text)) {
    if (std::find(out.begin(), out.end(), m.value) == out.end()) out.push_back(m.value);
  }
  return out;
}

LlmReply StubLlm::complete(const LlmPrompt& prompt) {
  if (prompt.task == LlmTask::Reformulate) {
    static const std::vector<ConversationTurn> kNoHistory;
    return {fallback_rewrite(prompt.history ? *prompt.history : kNoHistory, prompt.question, {}), std::nullopt};
  }
  if (prompt.request == nullptr || prompt.request->evidence_block.empty()) {
    return {prompt_template("insufficient_answer_v1"), std::nullopt};
  }
  const auto& block = prompt.request->evidence_block;
  std::string answer = "According to the retrieved sources, " + lead_sentence(entry_snippet(block[0])) + " [1]";
  if (block.size() > 1) answer += "\n\nFurther detail: " + lead_sentence(entry_snippet(block[1])) + " [2]";
  return {answer, std::nullopt};
}

RemoteLlmConfig RemoteLlmConfig::from_env() {
  RemoteLlmConfig c;
  if (const char* v = std::getenv("LLM_ENDPOINT")) c.endpoint = v;
  if (const char* v = std::getenv("LLM_MODEL")) c.model = v;
  if (const char* v = std::getenv("LLM_API_KEY")) c.api_key = v;
  return c;
}

RemoteLlm::RemoteLlm(RemoteLlmConfig config, std::shared_ptr<http::Client> client, std::shared_ptr<http::Clock> clock)
    : config_(std::move(config)), client_(std::move(client)), clock_(std::move(clock)) {
  if (config_.endpoint.empty()) throw Error(ErrorCode::InvalidArgument, "LLM endpoint is not set");
  if (!client_) client_ = http::default_client();
  if (!clock_) clock_ = http::system_clock();
}

LlmReply RemoteLlm::complete(const LlmPrompt& prompt) {
  json messages = json::array();
  for (const auto& m : prompt.messages) messages.push_back(json{{"role", m.role}, {"content", m.content}});
  http::Request req;
  req.method = "POST";
  req.url = config_.endpoint;
  req.timeout = config_.timeout;
  req.headers["Content-Type"] = "application/json";
  if (!config_.api_key.empty()) req.headers["Authorization"] = "Bearer " + config_.api_key;
  req.body = json{{"model", config_.model}, {"messages", messages}}.dump();

  std::string last_error;
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 1; attempt <= config_.retry.attempts; ++attempt) {
    if (attempt > 1) {
      clock_->sleep_for(backoff);
      backoff *= 2;
    }
    http::Response resp;
    try {
      resp = client_->send(req);
    } catch (const Error& e) {
      last_error = e.what();
      continue;
    }
    if (resp.status == 429 || resp.status >= 500) {
      last_error = "HTTP " + std::to_string(resp.status);
      continue;
    }
    if (resp.status != 200) {
      throw Error(ErrorCode::ProviderUnavailable, "LLM endpoint returned HTTP " + std::to_string(resp.status));
    }
    const auto body = json::parse(resp.body, nullptr, false);
    if (body.is_discarded() || !body.contains("choices") || !body.at("choices").is_array() ||
        body.at("choices").empty()) {
      throw Error(ErrorCode::ProviderUnavailable, "LLM response has no choices");
    }
    const auto& message = body.at("choices").at(0).value("message", json::object());
    LlmReply reply;
    reply.text = message.value("content", "");
    if (message.contains("reasoning_content") && message.at("reasoning_content").is_string()) {
      reply.reasoning_trace = message.at("reasoning_content").get<std::string>();
    }
    return reply;
  }
  throw Error(ErrorCode::ProviderUnavailable,
              "LLM endpoint failed after " + std::to_string(config_.retry.attempts) + " attempts: " + last_error);
}

Generation generate_answer(const GenerationRequest& req, LlmProvider& llm) {
  LlmPrompt prompt;
  prompt.task = LlmTask::Answer;
  prompt.messages = {{"system", req.system_prompt}, {"user", req.user_message()}};
  prompt.request = &req;
  prompt.question = req.question;
  auto reply = llm.complete(prompt);

  const int n = static_cast<int>(req.evidence_block.size());
  Generation g;
  g.reasoning_trace = std::move(reply.reasoning_trace);
  std::size_t pos = 0;
  std::set<int> cited;
  for (const auto& m : scan_markers(reply.text)) {
    std::size_t cut = m.begin;
    if (m.value >= 1 && m.value <= n) {
      cited.insert(m.value);
      g.answer.append(reply.text, pos, m.end - pos);
    } else {
      if (cut > pos && reply.text[cut - 1] == ' ') --cut;
      g.answer.append(reply.text, pos, cut - pos);
    }
    pos = m.end;
  }
  g.answer.append(reply.text, pos, std::string::npos);
  g.cited_markers.assign(cited.begin(), cited.end());
  return g;
}

// ---------------------------------------------------------------------------
// attribution

std::string format_match_percent(double score) {
  double pct = std::round(score * 1000.0) / 10.0;
  if (pct == 0.0) pct = 0.0;  // no "-0.0"
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", pct);
  return buf;
}

std::string authors_display(const std::vector<std::string>& authors) {
  if (authors.empty()) return "Unknown authors";
  if (authors.size() == 1) return authors.front();
  return authors[0] + ", " + authors[1] + " et al.";
}

Attribution attribute_sources(const std::vector<RetrievedEvidence>& evidence, const std::vector<int>& cited_markers) {
  std::set<int> cited;
  for (int m : cited_markers) {
    if (m < 1 || m > static_cast<int>(evidence.size())) {
      throw Error(ErrorCode::MarkerOutOfRange, "marker [" + std::to_string(m) + "] has no evidence entry");
    }
    cited.insert(m);
  }
  Attribution out;
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    const auto& e = evidence[i];
    AttributionRecord r;
    r.kind = e.source_kind;
    r.ref = e.ref;
    r.title = e.display_title;
    r.cited = cited.contains(static_cast<int>(i + 1));
    if (e.source_kind == SourceKind::LocalRegulatory) {
      r.rank = static_cast<int>(out.local.size() + 1);
      r.match_percent = std::round(e.score * 1000.0) / 10.0;
      r.display = "#" + std::to_string(r.rank) + " - " + r.title + " | " + format_match_percent(e.score) + "% match";
      out.local.push_back(std::move(r));
    } else {
      r.rank = static_cast<int>(out.literature.size() + 1);
      if (e.article) {
        r.authors_display = authors_display(e.article->authors);
        r.year = e.article->year;
        r.journal = e.article->journal;
        r.url = e.article->url;
      } else {
        r.authors_display = authors_display({});
        r.url = pubmed::article_url(e.ref);
      }
      r.display = "#" + std::to_string(r.rank) + " - " + r.authors_display + " (" + std::to_string(r.year) +
                  ") | " + r.journal;
      out.literature.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// turn loop

namespace {

std::string session_title(std::string_view text) {
  const auto cps = detail::decode_utf8(detail::trim(text));
  std::string out;
  for (std::size_t i = 0; i < cps.size() && i < 60; ++i) detail::append_utf8(out, cps[i]);
  return out;
}

std::string clarification_text(const std::vector<std::string>& candidates) {
  std::string list;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i > 0) list += (i + 1 == candidates.size()) ? " or " : ", ";
    list += "\"" + candidates[i] + "\"";
  }
  auto text = prompt_template("clarify_v1");
  const auto pos = text.find("{candidates}");
  if (pos != std::string::npos) text.replace(pos, std::string_view("{candidates}").size(), list);
  return text;
}

}  // namespace

ConversationTurn run_turn(Session& session, std::string_view user_text, const Dependencies& deps,
                          const TurnObserver& on_append) {
  if (detail::trim(user_text).empty()) throw Error(ErrorCode::InvalidArgument, "message is empty");

  auto append = [&](ConversationTurn turn) -> const ConversationTurn& {
    turn.turn_id = session.turns.empty() ? 1 : session.turns.back().turn_id + 1;
    turn.timestamp = deps.now();
    if (session.created_at.empty()) session.created_at = turn.timestamp;
    session.updated_at = turn.timestamp;
    session.turns.push_back(std::move(turn));
    if (on_append) on_append(session, session.turns.back());
    return session.turns.back();
  };

  // A user turn left dangling by an earlier crash is closed before continuing.
  if (!session.turns.empty() && session.turns.back().role == Role::User) {
    ConversationTurn closing;
    closing.role = Role::Assistant;
    closing.text = "This question was interrupted before an answer was produced.";
    closing.error = "interrupted";
    append(std::move(closing));
  }

  if (session.title.empty()) session.title = session_title(user_text);
  const std::vector<ConversationTurn> history = session.turns;
  ConversationTurn user;
  user.role = Role::User;
  user.text = std::string(user_text);
  append(std::move(user));

  ConversationTurn reply;
  reply.role = Role::Assistant;
  StubLlm fallback_llm;
  LlmProvider& llm = deps.llm != nullptr ? *deps.llm : fallback_llm;
  try {
    const auto ref = reformulate_query(history, user_text, &llm, deps.reformulator);
    reply.reformulated_query = ref.standalone_question;
    if (ref.ambiguous) {
      reply.clarification = true;
      reply.text = clarification_text(ref.candidates);
      return append(std::move(reply));
    }
    const auto weights = route_sources(ref.standalone_question, deps.router);
    auto retrieval = retrieve_dual(ref.standalone_question, weights, deps.retrieval);
    const auto request = compose_prompt(ref.standalone_question, retrieval.evidence);
    auto generation = generate_answer(request, llm);
    attribute_sources(retrieval.evidence, generation.cited_markers);
    reply.text = std::move(generation.answer);
    reply.cited_markers = std::move(generation.cited_markers);
    reply.reasoning_trace = std::move(generation.reasoning_trace);
    reply.evidence = std::move(retrieval.evidence);
    reply.degraded = retrieval.degraded;
  } catch (const std::exception& e) {
    ConversationTurn failed;
    failed.role = Role::Assistant;
    failed.reformulated_query = reply.reformulated_query;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
      failed.error = std::string(to_string(err->code()));
    } else {
      failed.error = "internal";
    }
    failed.text = "The answer could not be produced: " + std::string(e.what());
    append(std::move(failed));
    throw;
  }
  return append(std::move(reply));
}

}  // namespace evrag::orchestrate
