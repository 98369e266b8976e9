#include "evrag/mcp.hpp"

#include <istream>
#include <ostream>

#include <spdlog/spdlog.h>

#include "evrag/error.hpp"
#include "evrag/pubmed.hpp"

namespace evrag::mcp {

void ToolRegistry::add(ToolDescriptor descriptor, ToolHandler handler) {
  if (find(descriptor.name) != nullptr) {
    throw Error(ErrorCode::InvalidArgument, "duplicate tool " + descriptor.name);
  }
  tools_.push_back(Tool{std::move(descriptor), std::move(handler)});
}

json ToolRegistry::list() const {
  json tools = json::array();
  for (const auto& t : tools_) {
    tools.push_back(json{{"name", t.descriptor.name},
                         {"description", t.descriptor.description},
                         {"inputSchema", t.descriptor.input_schema}});
  }
  return json{{"tools", tools}};
}

const ToolRegistry::Tool* ToolRegistry::find(std::string_view name) const {
  for (const auto& t : tools_) {
    if (t.descriptor.name == name) return &t;
  }
  return nullptr;
}

namespace {

bool type_matches(const json& value, const std::string& type) {
  if (type == "string") return value.is_string();
  if (type == "integer") return value.is_number_integer();
  if (type == "number") return value.is_number();
  if (type == "boolean") return value.is_boolean();
  if (type == "array") return value.is_array();
  if (type == "object") return value.is_object();
  if (type == "null") return value.is_null();
  return true;
}

}  // namespace

void validate_args(const json& schema, const json& args) {
  if (!args.is_object()) throw Error(ErrorCode::ArgValidation, "arguments must be an object");
  if (schema.contains("required")) {
    for (const auto& name : schema.at("required")) {
      if (!args.contains(name.get<std::string>())) {
        throw Error(ErrorCode::ArgValidation, "missing required argument '" + name.get<std::string>() + "'");
      }
    }
  }
  const json properties = schema.value("properties", json::object());
  const bool closed = schema.contains("additionalProperties") && schema.at("additionalProperties") == false;
  for (const auto& [name, value] : args.items()) {
    if (!properties.contains(name)) {
      if (closed) throw Error(ErrorCode::ArgValidation, "unexpected argument '" + name + "'");
      continue;
    }
    const auto& prop = properties.at(name);
    if (prop.contains("type") && !type_matches(value, prop.at("type").get<std::string>())) {
      throw Error(ErrorCode::ArgValidation,
                  "argument '" + name + "' must be of type " + prop.at("type").get<std::string>());
    }
    if (value.is_number()) {
      const double v = value.get<double>();
      if (prop.contains("minimum") && v < prop.at("minimum").get<double>()) {
        throw Error(ErrorCode::ArgValidation, "argument '" + name + "' below minimum");
      }
      if (prop.contains("maximum") && v > prop.at("maximum").get<double>()) {
        throw Error(ErrorCode::ArgValidation, "argument '" + name + "' above maximum");
      }
    }
    if (value.is_string() && prop.contains("minLength") &&
        value.get<std::string>().size() < prop.at("minLength").get<std::size_t>()) {
      throw Error(ErrorCode::ArgValidation, "argument '" + name + "' too short");
    }
  }
}

json call_tool(std::string_view name, const json& args, const ToolRegistry& registry) {
  const auto* tool = registry.find(name);
  if (tool == nullptr) throw Error(ErrorCode::UnknownTool, "unknown tool '" + std::string(name) + "'");
  validate_args(tool->descriptor.input_schema, args);
  try {
    json result = tool->handler(args);
    return json{{"content", json::array({json{{"type", "text"}, {"text", result.dump()}}})},
                {"structuredContent", result},
                {"isError", false}};
  } catch (const std::exception& e) {
    spdlog::warn("tool {} failed: {}", name, e.what());
    return json{{"content", json::array({json{{"type", "text"}, {"text", e.what()}}})},
                {"isError", true}};
  }
}

json make_error(const json& id, int code, std::string_view message) {
  return json{{"jsonrpc", "2.0"},
              {"id", id},
              {"error", json{{"code", code}, {"message", std::string(message)}}}};
}

// ---------------------------------------------------------------------------
// server

Server::Server(const ToolRegistry& registry) : registry_(registry) {
  if (registry_.empty()) throw Error(ErrorCode::InvalidArgument, "tool registry is empty");
}

json Server::initialize_result() const {
  return json{{"protocolVersion", kProtocolVersion},
              {"serverInfo", json{{"name", kServerName}, {"version", kServerVersion}}},
              {"capabilities", json{{"tools", json{{"listChanged", false}}}}}};
}

namespace {

struct RpcFailure {
  int code;
  std::string message;
};

bool valid_id(const json& id) { return id.is_string() || id.is_number() || id.is_null(); }

}  // namespace

json Server::dispatch(const std::string& method, const json& params) {
  if (method == "initialize") return initialize_result();
  if (method == "ping") return json::object();
  if (method == "tools/list") return registry_.list();
  if (method == "tools/call") {
    if (!params.is_object() || !params.contains("name") || !params.at("name").is_string()) {
      throw RpcFailure{kInvalidParams, "tools/call requires a string 'name'"};
    }
    const json args = params.contains("arguments") ? params.at("arguments") : json::object();
    try {
      return call_tool(params.at("name").get<std::string>(), args, registry_);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::UnknownTool || e.code() == ErrorCode::ArgValidation) {
        throw RpcFailure{kInvalidParams, e.what()};
      }
      throw;
    }
  }
  throw RpcFailure{kMethodNotFound, "method not found: " + method};
}

std::optional<json> Server::handle_single(const json& message) {
  if (!message.is_object()) return make_error(nullptr, kInvalidRequest, "request must be an object");
  const bool has_id = message.contains("id");
  const json id = has_id && valid_id(message.at("id")) ? message.at("id") : json(nullptr);

  if (!message.contains("jsonrpc") || message.at("jsonrpc") != "2.0") {
    return make_error(id, kInvalidRequest, "jsonrpc must be \"2.0\"");
  }
  if (has_id && !valid_id(message.at("id"))) {
    return make_error(nullptr, kInvalidRequest, "id must be a string, number or null");
  }
  if (!message.contains("method") || !message.at("method").is_string()) {
    return make_error(id, kInvalidRequest, "method must be a string");
  }
  const json params = message.contains("params") ? message.at("params") : json::object();
  if (!params.is_object() && !params.is_array()) {
    return make_error(id, kInvalidRequest, "params must be an object or array");
  }

  const auto method = message.at("method").get<std::string>();
  try {
    json result = dispatch(method, params);
    if (!has_id) return std::nullopt;
    return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
  } catch (const RpcFailure& f) {
    if (!has_id) return std::nullopt;
    return make_error(id, f.code, f.message);
  } catch (const std::exception& e) {
    spdlog::error("internal error handling {}: {}", method, e.what());
    if (!has_id) return std::nullopt;
    return make_error(id, kInternalError, e.what());
  }
}

std::optional<json> Server::handle(const json& message) {
  if (!message.is_array()) return handle_single(message);
  if (message.empty()) return make_error(nullptr, kInvalidRequest, "empty batch");
  json responses = json::array();
  for (const auto& item : message) {
    if (auto r = handle_single(item)) responses.push_back(std::move(*r));
  }
  if (responses.empty()) return std::nullopt;
  return responses;
}

std::optional<std::string> Server::handle_line(std::string_view line) {
  json message;
  try {
    message = json::parse(line);
  } catch (const json::parse_error&) {
    return make_error(nullptr, kParseError, "parse error").dump();
  }
  auto response = handle(message);
  if (!response) return std::nullopt;
  // Invalid UTF-8 echoed back in an id or message must not break the output line.
  return response->dump(-1, ' ', false, json::error_handler_t::replace);
}

bool Server::serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::optional<std::string> response;
    try {
      response = handle_line(line);
    } catch (const std::exception& e) {
      response = make_error(nullptr, kInternalError, e.what()).dump();
    }
    if (response) {
      out << *response << '\n';
      out.flush();
      if (!out) {
        spdlog::error("mcp: output stream failed, stopping");
        return false;
      }
    }
  }
  if (in.bad()) {
    spdlog::error("mcp: input stream failed");
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// literature tool

ToolDescriptor literature_search_descriptor() {
  return ToolDescriptor{
      "literature_search",
      "Search PubMed for recent peer-reviewed literature. Reviews and newer publications rank first.",
      json{{"type", "object"},
           {"properties",
            json{{"term", json{{"type", "string"}, {"minLength", 1}, {"description", "Search query"}}},
                 {"max_results", json{{"type", "integer"}, {"minimum", 1}, {"maximum", 20}}},
                 {"years_back", json{{"type", "integer"}, {"minimum", 0}, {"maximum", 100}}},
                 {"prefer_reviews", json{{"type", "boolean"}}}}},
           {"required", json::array({"term"})},
           {"additionalProperties", false}}};
}

ToolRegistry make_literature_registry(std::shared_ptr<pubmed::LitClient> client) {
  ToolRegistry registry;
  registry.add(literature_search_descriptor(), [client](const json& args) {
    pubmed::LitQuery q;
    q.term = args.at("term").get<std::string>();
    q.max_results = args.value("max_results", std::size_t{3});
    q.years_back = args.value("years_back", 5);
    q.prefer_reviews = args.value("prefer_reviews", true);
    json articles = json::array();
    for (const auto& a : client->find(q)) articles.push_back(pubmed::to_json(a));
    return json{{"articles", articles}};
  });
  return registry;
}

}  // namespace evrag::mcp
