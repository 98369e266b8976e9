#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "evrag/orchestrate.hpp"
#include "evrag/session_store.hpp"

namespace evrag::service {

using nlohmann::json;

inline constexpr std::size_t kMaxMessageChars = 4000;
inline constexpr std::string_view kDisclaimer =
    "This assistant is for educational purposes only and does not substitute for professional medical advice, "
    "diagnosis or treatment.";

struct ApiReply {
  int status = 200;
  json body;
};

/// Error body {"error": {"code", "message"}}.
ApiReply error_reply(int status, std::string_view code, std::string_view message);

/// Wire shape of one answered turn.
json chat_response(const std::string& session_id, const orchestrate::ConversationTurn& turn);

/// HTTP-independent request handling. Thread-safe; turns within one session
/// are serialized.
class ChatService {
 public:
  ChatService(std::shared_ptr<SessionStore> store, orchestrate::Dependencies deps);

  ApiReply handle_chat(const json& request);
  ApiReply list_sessions() const;
  ApiReply get_session(std::string_view id) const;
  ApiReply health() const;
  ApiReply sources() const;

  const SessionStore& store() const { return *store_; }

 private:
  std::shared_ptr<std::mutex> session_lock(const std::string& id);

  std::shared_ptr<SessionStore> store_;
  orchestrate::Dependencies deps_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};
/// "host:port", "host" or ":port". Throws InvalidArgument.
BindAddress parse_bind_address(std::string_view s);

/// cpp-httplib front end for ChatService.
class HttpServer {
 public:
  explicit HttpServer(ChatService& service, std::filesystem::path static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const BindAddress& addr);
  /// Blocks until stop().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evrag::service
