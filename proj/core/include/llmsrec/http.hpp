#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace llmsrec::net {

struct HttpResponse {
  /// 0 when no response was received (connection refused, DNS, timeout).
  int status = 0;
  std::string body;
  std::string error;
};

using Headers = std::multimap<std::string, std::string>;

/// POST-a-JSON-body abstraction so clients can be exercised without sockets.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 const Headers& headers) = 0;
};

/// cpp-httplib backed transport. `base_url` may carry a path prefix, e.g.
/// "https://api.openai.com/v1".
class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, std::chrono::milliseconds timeout);
  HttpResponse post_json(const std::string& path, const std::string& body,
                         const Headers& headers) override;

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::milliseconds timeout_;
};

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash, may be empty
};
UrlParts split_url(const std::string& url);

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper real_sleeper();

bool is_retryable(int status);

struct RetryOutcome {
  HttpResponse response;
  int retries = 0;
};

/// Retries 429, 5xx and transport failures with exponential backoff. Throws
/// HttpError carrying the last status once attempts are exhausted or on a
/// non-retryable status.
RetryOutcome post_with_retry(HttpTransport& transport, const std::string& path,
                             const std::string& body, const Headers& headers,
                             const RetryPolicy& policy, const Sleeper& sleep);

/// Value of the environment variable, or empty when unset.
std::string env_or_empty(const std::string& name);

}  // namespace llmsrec::net
