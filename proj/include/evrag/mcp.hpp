#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evrag::pubmed {
class LitClient;
}

namespace evrag::mcp {

using nlohmann::json;

inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kInternalError = -32603;

inline constexpr std::string_view kProtocolVersion = "2025-06-18";
inline constexpr std::string_view kServerName = "evrag-literature";
inline constexpr std::string_view kServerVersion = "1.0.0";

struct ToolDescriptor {
  std::string name;
  std::string description;
  json input_schema;
};

/// Returns the tool's structured result. Throwing reports a tool-level error
/// (isError), not a protocol error.
using ToolHandler = std::function<json(const json& args)>;

class ToolRegistry {
 public:
  void add(ToolDescriptor descriptor, ToolHandler handler);
  json list() const;
  bool empty() const { return tools_.empty(); }

  struct Tool {
    ToolDescriptor descriptor;
    ToolHandler handler;
  };
  const Tool* find(std::string_view name) const;

 private:
  std::vector<Tool> tools_;
};

/// Checks args against the supported JSON-schema subset (object, required,
/// properties with type/minimum/maximum/minLength, additionalProperties).
/// Throws evrag::Error(ArgValidation).
void validate_args(const json& schema, const json& args);

/// MCP tools/call result: {"content": [...], "structuredContent": ..., "isError": bool}.
/// Throws UnknownTool or ArgValidation.
json call_tool(std::string_view name, const json& args, const ToolRegistry& registry);

json make_error(const json& id, int code, std::string_view message);

class Server {
 public:
  explicit Server(const ToolRegistry& registry);

  /// One parsed JSON value (object or batch array). nullopt when nothing is
  /// to be sent back (notifications, all-notification batches).
  std::optional<json> handle(const json& message);
  /// One raw line. Unparseable input yields a -32700 response.
  std::optional<std::string> handle_line(std::string_view line);

  /// Newline-delimited JSON until EOF. Returns false if the output stream failed.
  bool serve(std::istream& in, std::ostream& out);

  json initialize_result() const;

 private:
  std::optional<json> handle_single(const json& message);
  json dispatch(const std::string& method, const json& params);

  const ToolRegistry& registry_;
};

ToolDescriptor literature_search_descriptor();
ToolRegistry make_literature_registry(std::shared_ptr<pubmed::LitClient> client);

}  // namespace evrag::mcp
