#include "evrag/service.hpp"

#include <set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "evrag/error.hpp"
#include "text_util.hpp"

namespace evrag::service {

using orchestrate::ConversationTurn;
using orchestrate::Session;

ApiReply error_reply(int status, std::string_view code, std::string_view message) {
  return ApiReply{status, json{{"error", json{{"code", std::string(code)}, {"message", std::string(message)}}}}};
}

json chat_response(const std::string& session_id, const ConversationTurn& turn) {
  const auto attribution = orchestrate::attribute_sources(turn.evidence, turn.cited_markers);
  json local = json::array();
  for (const auto& r : attribution.local) {
    local.push_back(json{{"rank", r.rank},
                         {"title", r.title},
                         {"match_percent", r.match_percent},
                         {"chunk_id", r.ref},
                         {"cited", r.cited},
                         {"display", r.display}});
  }
  json literature = json::array();
  for (const auto& r : attribution.literature) {
    literature.push_back(json{{"rank", r.rank},
                              {"authors_display", r.authors_display},
                              {"year", r.year},
                              {"journal", r.journal},
                              {"title", r.title},
                              {"url", r.url},
                              {"pmid", r.ref},
                              {"cited", r.cited},
                              {"display", r.display}});
  }
  json j{{"session_id", session_id},
         {"turn_id", turn.turn_id},
         {"answer", turn.text},
         {"local_sources", local},
         {"literature_sources", literature},
         {"cited_markers", turn.cited_markers},
         {"reformulated_query", turn.reformulated_query.value_or("")},
         {"degraded", turn.degraded},
         {"clarification", turn.clarification}};
  if (turn.reasoning_trace) j["reasoning_trace"] = *turn.reasoning_trace;
  return j;
}

ChatService::ChatService(std::shared_ptr<SessionStore> store, orchestrate::Dependencies deps)
    : store_(std::move(store)), deps_(std::move(deps)) {}

std::shared_ptr<std::mutex> ChatService::session_lock(const std::string& id) {
  std::lock_guard guard(locks_mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

namespace {

std::pair<int, std::string_view> status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IndexUnavailable: return {503, "index_unavailable"};
    case ErrorCode::ProviderUnavailable: return {503, "provider_unavailable"};
    case ErrorCode::NotFound: return {404, "not_found"};
    case ErrorCode::CorruptSession: return {409, "corrupt_session"};
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyText: return {400, "invalid_request"};
    default: return {500, "internal_error"};
  }
}

}  // namespace

ApiReply ChatService::handle_chat(const json& request) {
  if (!request.is_object() || !request.contains("message") || !request.at("message").is_string()) {
    return error_reply(400, "invalid_request", "body must be an object with a string 'message'");
  }
  const auto message = request.at("message").get<std::string>();
  if (detail::trim(message).empty()) return error_reply(400, "invalid_request", "message is empty");
  if (detail::decode_utf8(message).size() > kMaxMessageChars) {
    return error_reply(400, "invalid_request", "message exceeds " + std::to_string(kMaxMessageChars) + " characters");
  }

  std::string session_id;
  const bool existing = request.contains("session_id") && !request.at("session_id").is_null();
  if (existing) {
    if (!request.at("session_id").is_string()) return error_reply(400, "invalid_request", "session_id must be a string");
    session_id = request.at("session_id").get<std::string>();
    if (!store_->exists(session_id)) return error_reply(404, "not_found", "no session '" + session_id + "'");
  } else {
    do {
      session_id = SessionStore::new_session_id();
    } while (store_->exists(session_id));
  }

  const auto lock = session_lock(session_id);
  std::lock_guard guard(*lock);
  Session session;
  if (existing) {
    auto loaded = store_->load(session_id);
    if (loaded.corrupt) {
      return error_reply(409, "corrupt_session", "session " + session_id + " is corrupt (" + loaded.error + ")");
    }
    session = std::move(loaded.session);
  } else {
    session.session_id = session_id;
    session.created_at = deps_.now();
    session.updated_at = session.created_at;
  }

  bool header_written = existing;
  auto on_append = [&](const Session& s, const ConversationTurn& turn) {
    if (!header_written) {
      store_->persist(s);
      header_written = true;
      return;
    }
    store_->append_turn(s, turn);
  };

  try {
    const auto turn = orchestrate::run_turn(session, message, deps_, on_append);
    store_->persist(session);
    return ApiReply{200, chat_response(session_id, turn)};
  } catch (const Error& e) {
    spdlog::warn("chat turn failed in session {}: {}", session_id, e.what());
    try {
      store_->persist(session);
    } catch (const std::exception& pe) {
      spdlog::error("could not persist session {}: {}", session_id, pe.what());
    }
    const auto [status, code] = status_for(e.code());
    auto reply = error_reply(status, code, e.what());
    reply.body["session_id"] = session_id;
    return reply;
  }
}

ApiReply ChatService::list_sessions() const {
  json sessions = json::array();
  for (const auto& h : store_->list()) sessions.push_back(to_json(h));
  return ApiReply{200, json{{"sessions", sessions}}};
}

ApiReply ChatService::get_session(std::string_view id) const {
  if (!store_->exists(id)) return error_reply(404, "not_found", "no session '" + std::string(id) + "'");
  const auto loaded = store_->load(id);
  json body = to_json(loaded.session);
  body["corrupt"] = loaded.corrupt;
  if (loaded.corrupt) body["error"] = loaded.error;
  return ApiReply{200, body};
}

ApiReply ChatService::health() const {
  const auto& index = deps_.retrieval.index;
  return ApiReply{200, json{{"status", index ? "ok" : "degraded"},
                            {"index_loaded", static_cast<bool>(index)},
                            {"index_size", index ? index->size() : 0},
                            {"literature_enabled", static_cast<bool>(deps_.retrieval.literature)},
                            {"disclaimer", std::string(kDisclaimer)}}};
}

ApiReply ChatService::sources() const {
  json documents = json::array();
  const auto& index = deps_.retrieval.index;
  if (index) {
    std::set<std::string> seen;
    for (std::size_t node = 0; node < index->size(); ++node) {
      const auto payload = json::parse(index->payload(node), nullptr, false);
      if (!payload.is_object()) continue;
      const auto doc_id = payload.value("doc_id", index->item_id(node));
      if (!seen.insert(doc_id).second) continue;
      documents.push_back(json{{"doc_id", doc_id},
                               {"title", payload.value("title", doc_id)},
                               {"origin", payload.value("origin", "agency_publication")}});
    }
  }
  json sources = json::array();
  sources.push_back(json{{"kind", "local_regulatory"},
                         {"label", "Regulatory fact sheets and educational transcripts"},
                         {"available", static_cast<bool>(index)},
                         {"chunks", index ? index->size() : 0},
                         {"documents", documents}});
  sources.push_back(json{{"kind", "literature"},
                         {"label", "Peer-reviewed literature (PubMed abstracts)"},
                         {"available", static_cast<bool>(deps_.retrieval.literature)}});
  return ApiReply{200, json{{"sources", sources}}};
}

// ---------------------------------------------------------------------------
// HTTP

BindAddress parse_bind_address(std::string_view s) {
  BindAddress addr;
  const auto colon = s.rfind(':');
  std::string_view host = colon == std::string_view::npos ? s : s.substr(0, colon);
  if (!host.empty()) addr.host = std::string(host);
  if (colon != std::string_view::npos) {
    const auto port = std::string(s.substr(colon + 1));
    try {
      std::size_t used = 0;
      addr.port = std::stoi(port, &used);
      if (used != port.size()) throw std::invalid_argument(port);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad port in bind address '" + std::string(s) + "'");
    }
    if (addr.port < 0 || addr.port > 65535) {
      throw Error(ErrorCode::InvalidArgument, "port out of range in '" + std::string(s) + "'");
    }
  }
  return addr;
}

struct HttpServer::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const ApiReply& reply) {
  res.status = reply.status;
  res.set_content(reply.body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

}  // namespace

HttpServer::HttpServer(ChatService& service, std::filesystem::path static_dir) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.Post("/api/chat", [&service](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      send(res, error_reply(400, "invalid_request", "request body is not valid JSON"));
      return;
    }
    send(res, service.handle_chat(body));
  });
  srv.Get("/api/sessions", [&service](const httplib::Request&, httplib::Response& res) {
    send(res, service.list_sessions());
  });
  srv.Get(R"(/api/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_session(req.matches[1].str()));
  });
  srv.Get("/api/health", [&service](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
  srv.Get("/api/sources", [&service](const httplib::Request&, httplib::Response& res) {
    send(res, service.sources());
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", message);
    send(res, error_reply(500, "internal_error", message));
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send(res, error_reply(404, "not_found", "no route for " + req.path));
    } else {
      send(res, error_reply(res.status, "http_error", "request failed"));
    }
  });
  if (!static_dir.empty() && !srv.set_mount_point("/", static_dir.string())) {
    throw Error(ErrorCode::NotFound, "static directory not found: " + static_dir.string());
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const BindAddress& addr) {
  auto& srv = impl_->server;
  if (addr.port == 0) {
    const int port = srv.bind_to_any_port(addr.host);
    if (port < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + addr.host);
    return port;
  }
  if (!srv.bind_to_port(addr.host, addr.port)) {
    throw Error(ErrorCode::InvalidArgument, "cannot bind " + addr.host + ":" + std::to_string(addr.port));
  }
  return addr.port;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace evrag::service
