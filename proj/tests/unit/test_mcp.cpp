#include <doctest.h>

#include <sstream>

#include "evrag/mcp.hpp"
#include "support.hpp"

using namespace evrag;
using namespace evrag::mcp;

namespace {

ToolRegistry literature_registry() { return make_literature_registry(test::make_lit_client(test::canned_pubmed())); }

json rpc(Server& server, const std::string& line) {
  const auto out = server.handle_line(line);
  REQUIRE(out.has_value());
  return json::parse(*out);
}

}  // namespace

TEST_CASE("basic protocol responses") {
  const auto registry = literature_registry();
  Server server(registry);
  const auto list = rpc(server, R"({"jsonrpc":"2.0","id":1,"method":"tools/list"})");
  CHECK(list.at("id") == 1);
  CHECK(list.at("result").at("tools").at(0).at("name") == "literature_search");
  CHECK(list.at("result").at("tools").at(0).contains("inputSchema"));

  const auto missing = rpc(server, R"({"jsonrpc":"2.0","id":2,"method":"nope"})");
  CHECK(missing.at("error").at("code") == kMethodNotFound);
  CHECK(missing.at("id") == 2);

  const auto garbage = rpc(server, "not json");
  CHECK(garbage.at("error").at("code") == kParseError);
  CHECK(garbage.at("id").is_null());

  const auto bad_version = rpc(server, R"({"jsonrpc":"1.0","id":3,"method":"ping"})");
  CHECK(bad_version.at("error").at("code") == kInvalidRequest);
}

TEST_CASE("initialize") {
  const auto registry = literature_registry();
  Server server(registry);
  const auto a = rpc(server, R"({"jsonrpc":"2.0","id":"a","method":"initialize","params":{}})");
  CHECK(a.at("result").at("capabilities").contains("tools"));
  const auto b = rpc(server, R"({"jsonrpc":"2.0","id":"a","method":"initialize","params":{}})");
  CHECK(a == b);
  CHECK_FALSE(server.handle_line(R"({"jsonrpc":"2.0","method":"initialize"})").has_value());
  CHECK_FALSE(server.handle_line(R"({"jsonrpc":"2.0","method":"notifications/initialized"})").has_value());
}

TEST_CASE("tools/call") {
  const auto registry = literature_registry();
  Server server(registry);
  const auto ok = rpc(server,
                      R"({"jsonrpc":"2.0","id":1,"method":"tools/call","params":{"name":"literature_search",)"
                      R"("arguments":{"term":"cocaine","max_results":1}}})");
  const auto& result = ok.at("result");
  CHECK(result.at("isError") == false);
  REQUIRE(result.at("structuredContent").at("articles").size() == 1);
  CHECK(result.at("structuredContent").at("articles").at(0).at("pmid") == "28183512");

  const auto unknown = rpc(server, R"({"jsonrpc":"2.0","id":2,"method":"tools/call","params":{"name":"nope"}})");
  CHECK(unknown.at("error").at("code") == kInvalidParams);

  const auto no_term = rpc(server,
                           R"({"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"literature_search",)"
                           R"("arguments":{"max_results":1}}})");
  CHECK(no_term.at("error").at("code") == kInvalidParams);

  const auto bad_type = rpc(server,
                            R"({"jsonrpc":"2.0","id":4,"method":"tools/call","params":{"name":"literature_search",)"
                            R"("arguments":{"term":"x","max_results":"3"}}})");
  CHECK(bad_type.at("error").at("code") == kInvalidParams);
}

TEST_CASE("handler failure is a tool-level error") {
  const auto registry = make_literature_registry(test::make_lit_client(test::dead_transport()));
  const auto result = call_tool("literature_search", json{{"term", "x"}}, registry);
  CHECK(result.at("isError") == true);
  CHECK(result.at("content").at(0).at("type") == "text");
}

TEST_CASE("schema subset") {
  const auto schema = literature_search_descriptor().input_schema;
  CHECK_NOTHROW(validate_args(schema, json{{"term", "x"}, {"years_back", 0}}));
  CHECK_THROWS_AS(validate_args(schema, json{{"term", ""}}), Error);
  CHECK_THROWS_AS(validate_args(schema, json{{"term", "x"}, {"max_results", 21}}), Error);
  CHECK_THROWS_AS(validate_args(schema, json{{"term", "x"}, {"extra", 1}}), Error);
  CHECK_THROWS_AS(validate_args(schema, json::array()), Error);
}

TEST_CASE("batches and the serve loop") {
  const auto registry = literature_registry();
  Server server(registry);
  const auto batch = server.handle(json::parse(
      R"([{"jsonrpc":"2.0","id":1,"method":"ping"},{"jsonrpc":"2.0","method":"ping"},{"jsonrpc":"2.0","id":2,"method":"x"}])"));
  REQUIRE(batch.has_value());
  CHECK(batch->size() == 2);
  CHECK_FALSE(server.handle(json::parse(R"([{"jsonrpc":"2.0","method":"ping"}])")).has_value());
  CHECK(server.handle(json::array())->at("error").at("code") == kInvalidRequest);

  std::istringstream in("{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"ping\"}\r\n\n   \nnot json\n"
                        "{\"jsonrpc\":\"2.0\",\"method\":\"ping\"}\n");
  std::ostringstream out;
  CHECK(server.serve(in, out));
  std::istringstream lines(out.str());
  std::string line;
  std::vector<json> replies;
  while (std::getline(lines, line)) replies.push_back(json::parse(line));
  REQUIRE(replies.size() == 2);
  CHECK(replies[0].at("id") == 1);
  CHECK(replies[1].at("error").at("code") == kParseError);
}
