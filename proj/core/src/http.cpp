#include "llmsrec/http.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace llmsrec::net {

UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("base URL needs a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.origin = url;
  } else {
    parts.origin = url.substr(0, path_start);
    parts.prefix = url.substr(path_start);
    while (!parts.prefix.empty() && parts.prefix.back() == '/') parts.prefix.pop_back();
  }
  return parts;
}

HttplibTransport::HttplibTransport(std::string base_url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  UrlParts parts = split_url(base_url);
  origin_ = std::move(parts.origin);
  prefix_ = std::move(parts.prefix);
}

HttpResponse HttplibTransport::post_json(const std::string& path, const std::string& body,
                                         const Headers& headers) {
  httplib::Client client(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers hdrs(headers.begin(), headers.end());
  auto result = client.Post(prefix_ + path, hdrs, body, "application/json");
  HttpResponse out;
  if (!result) {
    out.error = httplib::to_string(result.error());
    return out;
  }
  out.status = result->status;
  out.body = result->body;
  return out;
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

bool is_retryable(int status) { return status == 0 || status == 429 || status >= 500; }

RetryOutcome post_with_retry(HttpTransport& transport, const std::string& path,
                             const std::string& body, const Headers& headers,
                             const RetryPolicy& policy, const Sleeper& sleep) {
  const int attempts = std::max(1, policy.max_attempts);
  auto backoff = policy.initial_backoff;
  RetryOutcome outcome;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    outcome.response = transport.post_json(path, body, headers);
    const int status = outcome.response.status;
    if (status >= 200 && status < 300) return outcome;
    if (!is_retryable(status)) break;
    if (attempt == attempts) break;
    ++outcome.retries;
    if (sleep) sleep(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
  }
  const auto& last = outcome.response;
  std::string what = "HTTP request to " + path + " failed";
  if (last.status == 0) {
    what += " (no response: " + (last.error.empty() ? std::string("unknown") : last.error) + ")";
  } else {
    what += " with status " + std::to_string(last.status);
  }
  what += " after " + std::to_string(outcome.retries + 1) + " attempt(s)";
  throw HttpError(last.status, what);
}

std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* value = std::getenv(name.c_str());
  return value ? std::string(value) : std::string();
}

}  // namespace llmsrec::net
