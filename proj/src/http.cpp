#include "evrag/http.hpp"

#include <thread>

#include <httplib.h>

#include "evrag/error.hpp"

namespace evrag::http {

UrlParts split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "URL without scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

Response DefaultClient::send(const Request& request) {
  const auto parts = split_url(request.url);
  httplib::Client client(parts.origin);
  const auto secs = request.timeout.count() / 1000;
  const auto usecs = (request.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_follow_location(true);

  httplib::Headers headers;
  std::string content_type = "application/json";
  for (const auto& [k, v] : request.headers) {
    if (k == "Content-Type") {
      content_type = v;
    } else {
      headers.emplace(k, v);
    }
  }

  httplib::Result result = request.method == "POST"
                               ? client.Post(parts.path, headers, request.body, content_type)
                               : client.Get(parts.path, headers);
  if (!result) {
    throw Error(ErrorCode::TransportError,
                request.method + " " + request.url + ": " + httplib::to_string(result.error()));
  }
  return Response{result->status, result->body};
}

std::shared_ptr<Client> default_client() {
  static auto client = std::make_shared<DefaultClient>();
  return client;
}

void SystemClock::sleep_for(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

std::shared_ptr<Clock> system_clock() {
  static auto clock = std::make_shared<SystemClock>();
  return clock;
}

}  // namespace evrag::http
