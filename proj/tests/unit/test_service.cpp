#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "evrag/error.hpp"
#include "evrag/service.hpp"
#include "evrag/session_store.hpp"
#include "support.hpp"

using namespace evrag;
using namespace evrag::service;
using orchestrate::ConversationTurn;
using orchestrate::Role;
using orchestrate::Session;

namespace {

Session four_turn_session() {
  Session s;
  s.session_id = "s-roundtrip";
  s.title = "Cocaine \xE2\x80\x94 effects";
  s.created_at = "2024-01-01T00:00:00.000Z";
  s.updated_at = "2024-01-01T00:00:03.000Z";
  for (int i = 1; i <= 4; ++i) {
    ConversationTurn t;
    t.turn_id = i;
    t.role = i % 2 ? Role::User : Role::Assistant;
    t.text = "turn " + std::to_string(i) + " with \"quotes\"\nand newline";
    t.timestamp = "2024-01-01T00:00:0" + std::to_string(i - 1) + ".000Z";
    if (t.role == Role::Assistant) {
      orchestrate::RetrievedEvidence e;
      e.ref = "doc#000" + std::to_string(i);
      e.display_title = "Doc";
      e.score = 0.123456789;
      e.weight = 0.0617283945;
      e.snippet = "snippet";
      t.evidence.push_back(e);
      t.cited_markers = {1};
      t.reformulated_query = "standalone " + std::to_string(i);
      t.degraded = i == 4;
    }
    s.turns.push_back(t);
  }
  return s;
}

struct Backend {
  test::TempDir dir;
  embedding::DeterministicEmbedder embedder;
  test::FixtureIndex corpus = test::build_fixture_index(embedder, dir.path());
  orchestrate::StubLlm llm;

  orchestrate::Dependencies deps(bool literature = true) {
    orchestrate::Dependencies d;
    d.retrieval.embedder = &embedder;
    d.retrieval.index = corpus.index;
    if (literature) d.retrieval.literature = test::make_lit_client(test::canned_pubmed());
    d.llm = &llm;
    return d;
  }
};

Backend& backend() {
  static Backend b;
  return b;
}

}  // namespace

TEST_CASE("session store") {
  test::TempDir dir;
  SessionStore store(dir.path());
  CHECK(store.list().empty());

  SUBCASE("round trip") {
    const auto s = four_turn_session();
    store.persist(s);
    const auto loaded = store.load(s.session_id);
    CHECK_FALSE(loaded.corrupt);
    CHECK(loaded.session == s);
    CHECK(store.load_strict(s.session_id) == s);
  }
  SUBCASE("appended turns load") {
    auto s = four_turn_session();
    auto extra = s.turns.back();
    s.turns.pop_back();
    store.persist(s);
    s.turns.push_back(extra);
    store.append_turn(s, extra);
    CHECK(store.load(s.session_id).session == s);
  }
  SUBCASE("garbage line keeps earlier turns") {
    const auto s = four_turn_session();
    store.persist(s);
    const auto path = store.path_of(s.session_id);
    auto text = test::read_file(path);
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    lines[3] = "{garbage";
    std::string rebuilt;
    for (const auto& l : lines) rebuilt += l + "\n";
    test::write_file(path, rebuilt);
    const auto loaded = store.load(s.session_id);
    CHECK(loaded.corrupt);
    CHECK(loaded.bad_line == 4);
    CHECK(loaded.session.turns.size() == 2);
    CHECK_THROWS_AS(store.load_strict(s.session_id), Error);
    const auto listed = store.list();
    REQUIRE(listed.size() == 1);
    CHECK(listed[0].corrupt);
    CHECK(test::read_file(path) == rebuilt);
  }
  SUBCASE("list sorts newest first") {
    auto a = four_turn_session();
    a.session_id = "a";
    auto b = a;
    b.session_id = "b";
    b.updated_at = "2025-01-01T00:00:00.000Z";
    store.persist(a);
    store.persist(b);
    const auto listed = store.list();
    REQUIRE(listed.size() == 2);
    CHECK(listed[0].session_id == "b");
    CHECK(listed[1].turn_count == 4);
  }
  SUBCASE("ids") {
    const auto id = SessionStore::new_session_id();
    CHECK(SessionStore::valid_id(id));
    CHECK(id != SessionStore::new_session_id());
    CHECK_FALSE(SessionStore::valid_id("../etc/passwd"));
    CHECK_FALSE(store.exists("../x"));
    CHECK_THROWS_AS(store.load("nope"), Error);
  }
}

TEST_CASE("chat handling") {
  test::TempDir dir;
  auto store = std::make_shared<SessionStore>(dir.path());
  ChatService service(store, backend().deps());

  SUBCASE("first message creates a session") {
    const auto reply = service.handle_chat(json{{"message", "What are the cardiovascular effects of cocaine?"}});
    REQUIRE(reply.status == 200);
    const auto& body = reply.body;
    const auto id = body.at("session_id").get<std::string>();
    CHECK(store->exists(id));
    CHECK(body.at("local_sources").size() == 3);
    CHECK(body.at("literature_sources").size() >= 1);
    CHECK(body.at("answer").get<std::string>().find("[1]") != std::string::npos);
    for (std::size_t i = 0; i < body.at("local_sources").size(); ++i) {
      const auto& src = body.at("local_sources").at(i);
      CHECK(src.at("rank") == i + 1);
      const double pct = src.at("match_percent").get<double>();
      CHECK(pct >= -100.0);
      CHECK(pct <= 100.0);
      CHECK(std::abs(pct * 10 - std::round(pct * 10)) < 1e-9);
    }
    const auto lit = body.at("literature_sources").at(0);
    CHECK(lit.at("url").get<std::string>().rfind("https://pubmed.ncbi.nlm.nih.gov/", 0) == 0);

    const auto follow = service.handle_chat(json{{"session_id", id}, {"message", "Is it addictive?"}});
    REQUIRE(follow.status == 200);
    CHECK(follow.body.at("session_id") == id);
    CHECK(store->load_strict(id).turns.size() == 4);

    const auto listed = service.list_sessions();
    CHECK(listed.body.at("sessions").size() == 1);
    CHECK(service.get_session(id).body.at("turns").size() == 4);
  }
  SUBCASE("follow-up resolves against the previous question") {
    const auto first = service.handle_chat(json{{"message", "What is cocaine?"}});
    const auto id = first.body.at("session_id").get<std::string>();
    const auto follow = service.handle_chat(json{{"session_id", id}, {"message", "Is it addictive?"}});
    REQUIRE(follow.status == 200);
    CHECK(follow.body.at("reformulated_query") == "Is cocaine addictive?");
    CHECK(follow.body.at("clarification") == false);
  }
  SUBCASE("request validation") {
    CHECK(service.handle_chat(json{{"message", "   "}}).status == 400);
    CHECK(service.handle_chat(json{{"message", std::string(4001, 'x')}}).status == 400);
    CHECK(service.handle_chat(json{{"message", std::string(4000, 'x')}}).status == 200);
    CHECK(service.handle_chat(json{{"msg", "hi"}}).status == 400);
    CHECK(service.handle_chat(json::array()).status == 400);
    const auto unknown = service.handle_chat(json{{"session_id", "s-doesnotexist"}, {"message", "hi"}});
    CHECK(unknown.status == 404);
    CHECK(unknown.body.at("error").at("code") == "not_found");
    CHECK(service.get_session("s-doesnotexist").status == 404);
  }
  SUBCASE("corrupt session refuses new turns") {
    const auto first = service.handle_chat(json{{"message", "What is heroin?"}});
    const auto id = first.body.at("session_id").get<std::string>();
    std::ofstream(store->path_of(id), std::ios::app) << "{garbage\n";
    CHECK(service.handle_chat(json{{"session_id", id}, {"message", "more"}}).status == 409);
    CHECK(service.get_session(id).body.at("corrupt") == true);
  }
}

TEST_CASE("missing index maps to 503") {
  test::TempDir dir;
  auto store = std::make_shared<SessionStore>(dir.path());
  auto deps = backend().deps(false);
  deps.retrieval.index.reset();
  ChatService service(store, deps);
  const auto reply = service.handle_chat(json{{"message", "What is cocaine?"}});
  CHECK(reply.status == 503);
  CHECK(reply.body.at("error").at("code") == "index_unavailable");
  const auto id = reply.body.at("session_id").get<std::string>();
  const auto saved = store->load_strict(id);
  REQUIRE(saved.turns.size() == 2);
  CHECK(saved.turns[1].error == std::optional<std::string>("IndexUnavailable"));
  CHECK(service.health().body.at("status") == "degraded");
}

TEST_CASE("health and sources") {
  test::TempDir dir;
  ChatService service(std::make_shared<SessionStore>(dir.path()), backend().deps());
  const auto health = service.health().body;
  CHECK(health.at("disclaimer").get<std::string>().find("educational purposes") != std::string::npos);
  CHECK(health.at("index_loaded") == true);
  const auto sources = service.sources().body.at("sources");
  REQUIRE(sources.size() == 2);
  CHECK(sources.at(0).at("documents").size() == 10);
}

TEST_CASE("bind address parsing") {
  CHECK(parse_bind_address("0.0.0.0:9000").port == 9000);
  CHECK(parse_bind_address("0.0.0.0:9000").host == "0.0.0.0");
  CHECK(parse_bind_address(":0").host == "127.0.0.1");
  CHECK(parse_bind_address("localhost").port == 8080);
  CHECK_THROWS_AS(parse_bind_address("h:abc"), Error);
  CHECK_THROWS_AS(parse_bind_address("h:70000"), Error);
}

TEST_CASE("http front end") {
  test::TempDir dir;
  ChatService service(std::make_shared<SessionStore>(dir.path()), backend().deps());
  HttpServer server(service);
  const int port = server.bind(BindAddress{"127.0.0.1", 0});
  std::thread loop([&] { server.listen(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  const auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body).contains("disclaimer"));

  const auto bad = client.Post("/api/chat", "{oops", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body).at("error").at("code") == "invalid_request");

  const auto chat = client.Post("/api/chat", R"({"message":"What schedule is methamphetamine?"})", "application/json");
  REQUIRE(chat);
  CHECK(chat->status == 200);
  const auto id = json::parse(chat->body).at("session_id").get<std::string>();
  const auto got = client.Get(("/api/sessions/" + id).c_str());
  REQUIRE(got);
  CHECK(json::parse(got->body).at("turns").size() == 2);
  const auto list = client.Get("/api/sessions");
  REQUIRE(list);
  CHECK(json::parse(list->body).at("sessions").size() == 1);
  CHECK(client.Get("/api/sources")->status == 200);
  const auto missing = client.Get("/api/nothing");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body).at("error").at("code") == "not_found");

  server.stop();
  loop.join();
}
