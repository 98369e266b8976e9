#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace evrag::http {

struct Request {
  std::string method = "GET";
  std::string url;
  std::map<std::string, std::string> headers;
  std::string body;
  std::chrono::milliseconds timeout{30000};
};

struct Response {
  int status = 0;
  std::string body;
};

/// Outbound HTTP. Implementations throw evrag::Error(TransportError) when no
/// response was received; HTTP error statuses are returned, not thrown.
class Client {
 public:
  virtual ~Client() = default;
  virtual Response send(const Request& request) = 0;
};

/// cpp-httplib backed client (http and https).
class DefaultClient : public Client {
 public:
  Response send(const Request& request) override;
};

std::shared_ptr<Client> default_client();

/// Monotonic time source with an injectable sleep, so rate limiting and
/// backoff can run against a mock clock in tests.
class Clock {
 public:
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() const = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock : public Clock {
 public:
  time_point now() const override { return std::chrono::steady_clock::now(); }
  void sleep_for(std::chrono::milliseconds d) override;
};

std::shared_ptr<Clock> system_clock();

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
};

std::string percent_encode(std::string_view s);

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // includes query string
};
UrlParts split_url(std::string_view url);

}  // namespace evrag::http
