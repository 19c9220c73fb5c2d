#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "llmsrec/http.hpp"
#include "llmsrec/prompts.hpp"

namespace llmsrec::llm {

using nlohmann::json;

class LlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CompletionParams {
  std::string model_id = "gpt-3.5-turbo";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::chrono::milliseconds timeout{60000};
};

struct CompletionRecord {
  std::string prompt_hash;
  std::string response;
  double latency_ms = 0.0;
  int retry_count = 0;
  std::string provider;

  bool operator==(const CompletionRecord&) const = default;
};

json to_json(const CompletionRecord& record);
CompletionRecord completion_from_json(const json& j);
json to_json(const CompletionParams& params);

/// SHA-256 over the canonical JSON of the messages.
std::string prompt_hash(const prompts::PromptBundle& bundle);

struct BackendReply {
  std::string text;
  int retries = 0;
  /// Backends that do real I/O report their own wall time; test doubles
  /// report 0 so records stay byte-stable.
  double latency_ms = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual BackendReply generate(const prompts::PromptBundle& bundle,
                                const CompletionParams& params) = 0;
};

/// Runs the backend on `bundle` and wraps the reply for the record log.
CompletionRecord complete(const prompts::PromptBundle& bundle, const CompletionParams& params,
                          Backend& backend);

// ---------------------------------------------------------------------------

struct ChatEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  net::RetryPolicy retry;
};

/// OpenAI-compatible `POST {base}/chat/completions`.
class OpenAiChatBackend final : public Backend {
 public:
  explicit OpenAiChatBackend(ChatEndpointConfig config,
                             std::shared_ptr<net::HttpTransport> transport = nullptr,
                             net::Sleeper sleeper = net::real_sleeper());
  std::string id() const override { return "openai-chat:" + config_.base_url; }
  BackendReply generate(const prompts::PromptBundle& bundle,
                        const CompletionParams& params) override;

  static json request_body(const prompts::PromptBundle& bundle, const CompletionParams& params);

 private:
  ChatEndpointConfig config_;
  std::shared_ptr<net::HttpTransport> transport_;
  net::Sleeper sleeper_;
};

// ---------------------------------------------------------------------------

enum class MockPolicy {
  /// The hidden truth first, then the other candidates in presented order.
  kTruthFirst,
  /// Candidates exactly in presented order.
  kPresentedOrder,
  /// Descending oracle score (by title); ties shuffled with `seed`.
  kOracle,
};

MockPolicy parse_mock_policy(const std::string& name);
std::string mock_policy_name(MockPolicy policy);

struct MockConfig {
  MockPolicy policy = MockPolicy::kTruthFirst;
  std::map<std::string, double> oracle;
  std::uint64_t seed = 0;
  /// Non-candidate lines to inject.
  int hallucinations = 0;
  /// Repeats of already-listed candidates to inject.
  int duplicates = 0;
  /// Injected lines go after this many candidate lines (default: at the end).
  std::optional<std::size_t> inject_after;
};

/// Ranked "i. Title" lines for the test candidates found in the prompt.
std::string mock_rank(const prompts::PromptBundle& bundle, const MockConfig& config);

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockConfig config) : config_(std::move(config)) {}
  std::string id() const override { return "mock:" + mock_policy_name(config_.policy); }
  BackendReply generate(const prompts::PromptBundle& bundle,
                        const CompletionParams& params) override;

 private:
  MockConfig config_;
};

/// Serves stored responses by prompt hash.
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(std::unordered_map<std::string, std::string> responses)
      : responses_(std::move(responses)) {}
  std::string id() const override { return "replay"; }
  BackendReply generate(const prompts::PromptBundle& bundle,
                        const CompletionParams& params) override;
  std::size_t size() const { return responses_.size(); }

 private:
  std::unordered_map<std::string, std::string> responses_;
};

/// Response cache keyed by (prompt hash, params), persisted as JSONL.
class CachingBackend final : public Backend {
 public:
  CachingBackend(Backend& inner, std::optional<std::filesystem::path> path, bool bypass = false);
  std::string id() const override { return inner_.id(); }
  BackendReply generate(const prompts::PromptBundle& bundle,
                        const CompletionParams& params) override;
  std::size_t hits() const;
  std::size_t misses() const;

  static std::string cache_key(const prompts::PromptBundle& bundle,
                               const CompletionParams& params);

 private:
  Backend& inner_;
  bool bypass_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace llmsrec::llm
