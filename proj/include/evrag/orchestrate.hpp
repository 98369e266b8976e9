#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evrag/embedding.hpp"
#include "evrag/http.hpp"
#include "evrag/pubmed.hpp"
#include "evrag/vindex.hpp"

namespace evrag::orchestrate {

using nlohmann::json;

enum class Role { User, Assistant };
enum class SourceKind { LocalRegulatory, Literature };
enum class Route { Regulatory, Scientific, Mixed };

std::string_view to_string(Role r);
std::string_view to_string(SourceKind k);
std::string_view to_string(Route r);

inline constexpr std::size_t kContextTurns = 6;
inline constexpr std::size_t kSnippetLimit = 600;
inline constexpr std::size_t kDefaultLocalK = 3;
inline constexpr std::size_t kDefaultLitK = 3;

/// Prompt template compiled in from assets/prompts/<name>.txt.
std::string prompt_template(std::string_view name);

struct RetrievedEvidence {
  SourceKind source_kind = SourceKind::LocalRegulatory;
  std::string ref;  // chunk_id or pmid
  std::string display_title;
  double score = 0.0;
  double weight = 0.0;
  std::string snippet;
  std::optional<pubmed::Article> article;

  bool operator==(const RetrievedEvidence&) const = default;
};

struct ConversationTurn {
  int turn_id = 0;
  Role role = Role::User;
  std::string text;
  std::string timestamp;
  std::vector<RetrievedEvidence> evidence;
  std::optional<std::string> reformulated_query;
  std::optional<std::string> reasoning_trace;
  std::vector<int> cited_markers;
  bool degraded = false;
  bool clarification = false;
  std::optional<std::string> error;

  bool operator==(const ConversationTurn&) const = default;
};

struct Session {
  std::string session_id;
  std::string title;
  std::string created_at;
  std::string updated_at;
  std::vector<ConversationTurn> turns;

  bool operator==(const Session&) const = default;
};

json to_json(const RetrievedEvidence& e);
RetrievedEvidence evidence_from_json(const json& j);
json to_json(const ConversationTurn& t);
ConversationTurn turn_from_json(const json& j);

std::string now_iso8601();

// ---------------------------------------------------------------------------
// language model providers

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct GenerationRequest;

enum class LlmTask { Reformulate, Answer };

struct LlmPrompt {
  LlmTask task = LlmTask::Answer;
  std::vector<ChatMessage> messages;
  // Structured views of the same content for providers that do not need text.
  const GenerationRequest* request = nullptr;
  const std::vector<ConversationTurn>* history = nullptr;
  std::string question;
};

struct LlmReply {
  std::string text;
  std::optional<std::string> reasoning_trace;
};

/// Throws evrag::Error(ProviderUnavailable) when no reply can be produced.
class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual LlmReply complete(const LlmPrompt& prompt) = 0;
};

/// Offline provider. Answers quote the top evidence snippet and cite [1]
/// (and [2] when present); rewrites use the entity-substitution fallback.
class StubLlm : public LlmProvider {
 public:
  LlmReply complete(const LlmPrompt& prompt) override;
};

/// Wraps a callable; handy for scripted providers in tests and tools.
class CallbackLlm : public LlmProvider {
 public:
  explicit CallbackLlm(std::function<LlmReply(const LlmPrompt&)> fn) : fn_(std::move(fn)) {}
  LlmReply complete(const LlmPrompt& prompt) override { return fn_(prompt); }

 private:
  std::function<LlmReply(const LlmPrompt&)> fn_;
};

struct RemoteLlmConfig {
  std::string endpoint;
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  http::RetryPolicy retry;

  /// LLM_ENDPOINT, LLM_MODEL, LLM_API_KEY.
  static RemoteLlmConfig from_env();
};

/// Chat-completions shape: {"model", "messages"} -> choices[0].message.content
/// (plus an optional reasoning_content trace).
class RemoteLlm : public LlmProvider {
 public:
  RemoteLlm(RemoteLlmConfig config, std::shared_ptr<http::Client> client,
            std::shared_ptr<http::Clock> clock = http::system_clock());
  LlmReply complete(const LlmPrompt& prompt) override;

 private:
  RemoteLlmConfig config_;
  std::shared_ptr<http::Client> client_;
  std::shared_ptr<http::Clock> clock_;
};

// ---------------------------------------------------------------------------
// pipeline stages

struct Reformulation {
  std::string standalone_question;
  bool ambiguous = false;
  std::vector<std::string> candidates;  // competing referents when ambiguous
  bool used_fallback = false;
};

struct ReformulatorConfig {
  std::vector<std::string> anaphora_markers{"it", "its", "they", "them", "their", "there", "that"};
  std::size_t context_turns = kContextTurns;
};

/// Salient noun phrases of one utterance, in order of appearance.
std::vector<std::string> salient_entities(std::string_view text);
bool has_anaphora(std::string_view question, const ReformulatorConfig& cfg = {});

/// llm may be null, in which case the deterministic rewrite is used.
Reformulation reformulate_query(const std::vector<ConversationTurn>& history, std::string_view question,
                                LlmProvider* llm, const ReformulatorConfig& cfg = {});

struct SourceWeights {
  double w_local = 0.5;
  double w_lit = 0.5;
  Route route = Route::Mixed;
};

struct RouterConfig {
  std::vector<std::string> regulatory{"schedule", "scheduling", "legal", "law", "federal", "policy",
                                      "compliance", "controlled", "classification", "enforcement"};
  std::vector<std::string> scientific{"mechanism", "receptor", "efficacy", "clinical", "treatment",
                                      "neurobiological", "pharmacolog", "outcome", "dose", "study"};
  double dominant_weight = 0.7;
};

struct LexiconHits {
  std::size_t regulatory = 0;
  std::size_t scientific = 0;
};
LexiconHits count_lexicon_hits(std::string_view question, const RouterConfig& cfg = {});
SourceWeights route_sources(std::string_view question, const RouterConfig& cfg = {});

struct RetrievalDeps {
  const embedding::Embedder* embedder = nullptr;
  std::shared_ptr<const vindex::HnswIndex> index;
  std::shared_ptr<pubmed::LitClient> literature;  // null: literature path disabled
  std::size_t k_local = kDefaultLocalK;
  std::size_t k_lit = kDefaultLitK;
};

struct DualRetrieval {
  std::vector<RetrievedEvidence> evidence;  // sorted by weight descending
  bool degraded = false;
  std::vector<std::string> warnings;
};

/// Throws IndexUnavailable when no index is loaded. Literature failures only
/// set `degraded`.
DualRetrieval retrieve_dual(std::string_view question, const SourceWeights& weights,
                            const RetrievalDeps& deps);

struct GenerationConstraints {
  bool grounded = true;
  bool cite = true;
  bool admit_uncertainty = true;
  bool educational_tone = true;
};

struct GenerationRequest {
  std::string system_prompt;
  std::string question;
  std::vector<std::string> evidence_block;
  GenerationConstraints constraints;

  std::string user_message() const;
};

GenerationRequest compose_prompt(std::string_view question, const std::vector<RetrievedEvidence>& evidence);

struct Generation {
  std::string answer;
  std::vector<int> cited_markers;
  std::optional<std::string> reasoning_trace;
};

/// Bracketed [n] markers in order of first appearance.
std::vector<int> find_markers(std::string_view text);

/// Markers without a matching evidence entry are removed from the answer.
Generation generate_answer(const GenerationRequest& req, LlmProvider& llm);

struct AttributionRecord {
  SourceKind kind = SourceKind::LocalRegulatory;
  int rank = 0;
  std::string ref;
  std::string title;
  std::string display;
  bool cited = false;
  // local
  double match_percent = 0.0;
  // literature
  std::string authors_display;
  int year = 0;
  std::string journal;
  std::string url;
};

struct Attribution {
  std::vector<AttributionRecord> local;
  std::vector<AttributionRecord> literature;
};

std::string format_match_percent(double score);
std::string authors_display(const std::vector<std::string>& authors);
/// Throws MarkerOutOfRange for markers outside 1..evidence.size().
Attribution attribute_sources(const std::vector<RetrievedEvidence>& evidence,
                              const std::vector<int>& cited_markers);

// ---------------------------------------------------------------------------
// turn loop

struct Dependencies {
  RetrievalDeps retrieval;
  LlmProvider* llm = nullptr;
  ReformulatorConfig reformulator;
  RouterConfig router;
  std::function<std::string()> now = now_iso8601;
};

/// Called after each turn is appended, before the pipeline continues.
using TurnObserver = std::function<void(const Session&, const ConversationTurn&)>;

/// Appends the user turn and the assistant turn to `session` and returns the
/// assistant turn. Provider/index failures are recorded as an assistant turn
/// carrying `error`, then rethrown.
ConversationTurn run_turn(Session& session, std::string_view user_text, const Dependencies& deps,
                          const TurnObserver& on_append = {});

}  // namespace evrag::orchestrate
