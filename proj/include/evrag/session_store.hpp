#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evrag/orchestrate.hpp"

namespace evrag::service {

struct SessionHeader {
  std::string session_id;
  std::string title;
  std::string created_at;
  std::string updated_at;
  std::size_t turn_count = 0;
  bool corrupt = false;
  std::string error;
};

struct LoadedSession {
  orchestrate::Session session;  // turns read before any bad line
  bool corrupt = false;
  std::size_t bad_line = 0;  // 1-based
  std::string error;
};

/// One JSON-lines file per session under `root`: a header line, then one
/// line per turn. Turns are appended; header rewrites go through a temporary
/// file and a rename.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  static std::string new_session_id();
  static bool valid_id(std::string_view id);

  bool exists(std::string_view id) const;

  /// Writes header and all turns atomically.
  void persist(const orchestrate::Session& session) const;
  /// Appends one turn line and flushes it to disk.
  void append_turn(const orchestrate::Session& session, const orchestrate::ConversationTurn& turn) const;

  /// Throws NotFound. A bad line is reported through `corrupt`.
  LoadedSession load(std::string_view id) const;
  /// Like load() but throws CorruptSession on any bad line.
  orchestrate::Session load_strict(std::string_view id) const;

  /// Sorted by updated_at descending, then session_id.
  std::vector<SessionHeader> list() const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path path_of(std::string_view id) const;

 private:
  std::filesystem::path root_;
};

nlohmann::json to_json(const SessionHeader& h);
nlohmann::json to_json(const orchestrate::Session& s);

}  // namespace evrag::service
