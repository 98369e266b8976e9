#include "evrag/session_store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <random>

#include <fcntl.h>
#include <unistd.h>

#include "evrag/error.hpp"

namespace evrag::service {

namespace fs = std::filesystem;
using nlohmann::json;
using orchestrate::ConversationTurn;
using orchestrate::Session;

namespace {

json header_json(const Session& s) {
  return json{{"type", "session"},
              {"session_id", s.session_id},
              {"title", s.title},
              {"created_at", s.created_at},
              {"updated_at", s.updated_at}};
}

json turn_line(const ConversationTurn& t) {
  json j = orchestrate::to_json(t);
  j["type"] = "turn";
  return j;
}

std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) throw Error(ErrorCode::InvalidArgument, "write failed: " + path.string());
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

std::string SessionStore::new_session_id() {
  static constexpr char kAlphabet[] = "0123456789abcdefghijklmnopqrstuvwxyz";
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::uniform_int_distribution<int> pick(0, 35);
  std::string id = "s-";
  for (int i = 0; i < 20; ++i) id += kAlphabet[pick(rng)];
  return id;
}

bool SessionStore::valid_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

fs::path SessionStore::path_of(std::string_view id) const {
  if (!valid_id(id)) throw Error(ErrorCode::NotFound, "no session '" + std::string(id) + "'");
  return root_ / (std::string(id) + ".jsonl");
}

bool SessionStore::exists(std::string_view id) const { return valid_id(id) && fs::exists(path_of(id)); }

void SessionStore::persist(const Session& session) const {
  const auto path = path_of(session.session_id);
  auto tmp = path;
  tmp += ".tmp";
  std::string body = dump_line(header_json(session));
  for (const auto& t : session.turns) body += dump_line(turn_line(t));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp.string());
  try {
    write_all(fd, body, tmp);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, path);
}

void SessionStore::append_turn(const Session& session, const ConversationTurn& turn) const {
  const auto path = path_of(session.session_id);
  if (!fs::exists(path)) {
    persist(session);
    return;
  }
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND);
  if (fd < 0) throw Error(ErrorCode::InvalidArgument, "cannot append to " + path.string());
  try {
    write_all(fd, dump_line(turn_line(turn)), path);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
}

LoadedSession SessionStore::load(std::string_view id) const {
  const auto path = path_of(id);
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "no session '" + std::string(id) + "'");
  LoadedSession out;
  out.session.session_id = std::string(id);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      if (!have_header) {
        if (j.value("type", "") != "session") throw std::runtime_error("first line is not a session header");
        out.session.title = j.value("title", "");
        out.session.created_at = j.value("created_at", "");
        out.session.updated_at = j.value("updated_at", "");
        have_header = true;
        continue;
      }
      if (j.value("type", "") != "turn") throw std::runtime_error("expected a turn record");
      auto turn = orchestrate::turn_from_json(j);
      if (!out.session.turns.empty() && turn.turn_id <= out.session.turns.back().turn_id) {
        throw std::runtime_error("turn ids are not increasing");
      }
      out.session.turns.push_back(std::move(turn));
    } catch (const std::exception& e) {
      out.corrupt = true;
      out.bad_line = line_no;
      out.error = "line " + std::to_string(line_no) + ": " + e.what();
      break;
    }
  }
  if (!have_header && !out.corrupt) {
    out.corrupt = true;
    out.bad_line = 1;
    out.error = "missing session header";
  }
  // Appended turns are newer than the last header rewrite.
  if (!out.session.turns.empty() && out.session.turns.back().timestamp > out.session.updated_at) {
    out.session.updated_at = out.session.turns.back().timestamp;
  }
  return out;
}

Session SessionStore::load_strict(std::string_view id) const {
  auto loaded = load(id);
  if (loaded.corrupt) throw Error(ErrorCode::CorruptSession, "session " + std::string(id) + ": " + loaded.error);
  return std::move(loaded.session);
}

std::vector<SessionHeader> SessionStore::list() const {
  std::vector<SessionHeader> out;
  if (!fs::exists(root_)) return out;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
    const auto id = entry.path().stem().string();
    if (!valid_id(id)) continue;
    SessionHeader h;
    h.session_id = id;
    try {
      const auto loaded = load(id);
      h.title = loaded.session.title;
      h.created_at = loaded.session.created_at;
      h.updated_at = loaded.session.updated_at;
      h.turn_count = loaded.session.turns.size();
      h.corrupt = loaded.corrupt;
      h.error = loaded.error;
    } catch (const std::exception& e) {
      h.corrupt = true;
      h.error = e.what();
    }
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), [](const SessionHeader& a, const SessionHeader& b) {
    if (a.updated_at != b.updated_at) return a.updated_at > b.updated_at;
    return a.session_id < b.session_id;
  });
  return out;
}

json to_json(const SessionHeader& h) {
  json j{{"session_id", h.session_id}, {"title", h.title},           {"created_at", h.created_at},
         {"updated_at", h.updated_at}, {"turn_count", h.turn_count}, {"corrupt", h.corrupt}};
  if (!h.error.empty()) j["error"] = h.error;
  return j;
}

json to_json(const Session& s) {
  json turns = json::array();
  for (const auto& t : s.turns) turns.push_back(orchestrate::to_json(t));
  return json{{"session_id", s.session_id},
              {"title", s.title},
              {"created_at", s.created_at},
              {"updated_at", s.updated_at},
              {"turns", turns}};
}

}  // namespace evrag::service
