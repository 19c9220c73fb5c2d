#include "llmsrec/llm.hpp"

#include <algorithm>
#include <chrono>

#include "llmsrec/hashing.hpp"
#include "llmsrec/rng.hpp"

namespace llmsrec::llm {

json to_json(const CompletionRecord& r) {
  return json{{"prompt_hash", r.prompt_hash}, {"response", r.response},
              {"latency_ms", r.latency_ms},   {"retry_count", r.retry_count},
              {"provider", r.provider}};
}

CompletionRecord completion_from_json(const json& j) {
  CompletionRecord r;
  r.prompt_hash = j.at("prompt_hash").get<std::string>();
  r.response = j.at("response").get<std::string>();
  r.latency_ms = j.value("latency_ms", 0.0);
  r.retry_count = j.value("retry_count", 0);
  r.provider = j.value("provider", std::string());
  return r;
}

json to_json(const CompletionParams& p) {
  return json{{"model", p.model_id},
              {"temperature", p.temperature},
              {"max_tokens", p.max_output_tokens},
              {"timeout_ms", p.timeout.count()}};
}

std::string prompt_hash(const prompts::PromptBundle& bundle) {
  json messages = json::array();
  for (const auto& m : bundle.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return sha256_hex(messages.dump());
}

CompletionRecord complete(const prompts::PromptBundle& bundle, const CompletionParams& params,
                          Backend& backend) {
  BackendReply reply = backend.generate(bundle, params);
  CompletionRecord record;
  record.prompt_hash = prompt_hash(bundle);
  record.response = std::move(reply.text);
  record.latency_ms = reply.latency_ms;
  record.retry_count = reply.retries;
  record.provider = backend.id();
  return record;
}

// ---------------------------------------------------------------------------
// OpenAI-compatible chat
// ---------------------------------------------------------------------------

OpenAiChatBackend::OpenAiChatBackend(ChatEndpointConfig config,
                                     std::shared_ptr<net::HttpTransport> transport,
                                     net::Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {}

json OpenAiChatBackend::request_body(const prompts::PromptBundle& bundle,
                                     const CompletionParams& params) {
  json messages = json::array();
  for (const auto& m : bundle.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return json{{"model", params.model_id},
              {"messages", std::move(messages)},
              {"temperature", params.temperature},
              {"max_tokens", params.max_output_tokens}};
}

BackendReply OpenAiChatBackend::generate(const prompts::PromptBundle& bundle,
                                         const CompletionParams& params) {
  std::shared_ptr<net::HttpTransport> transport = transport_;
  if (!transport) transport = std::make_shared<net::HttplibTransport>(config_.base_url, params.timeout);

  net::Headers headers;
  if (auto key = net::env_or_empty(config_.api_key_env); !key.empty()) {
    headers.emplace("Authorization", "Bearer " + key);
  }
  const auto start = std::chrono::steady_clock::now();
  auto outcome = net::post_with_retry(*transport, "/chat/completions",
                                      request_body(bundle, params).dump(), headers,
                                      config_.retry, sleeper_);
  const auto elapsed = std::chrono::steady_clock::now() - start;

  BackendReply reply;
  reply.retries = outcome.retries;
  reply.latency_ms = std::chrono::duration<double, std::milli>(elapsed).count();
  try {
    json body = json::parse(outcome.response.body);
    reply.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw LlmError(std::string("malformed chat completion response: ") + e.what());
  }
  return reply;
}

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

MockPolicy parse_mock_policy(const std::string& name) {
  if (name == "truth-first" || name == "echo-truth-first") return MockPolicy::kTruthFirst;
  if (name == "presented-order") return MockPolicy::kPresentedOrder;
  if (name == "oracle") return MockPolicy::kOracle;
  throw std::invalid_argument("unknown mock policy: " + name);
}

std::string mock_policy_name(MockPolicy policy) {
  switch (policy) {
    case MockPolicy::kTruthFirst: return "truth-first";
    case MockPolicy::kPresentedOrder: return "presented-order";
    case MockPolicy::kOracle: return "oracle";
  }
  return "?";
}

std::string mock_rank(const prompts::PromptBundle& bundle, const MockConfig& config) {
  std::vector<std::string> titles;
  try {
    titles = prompts::extract_candidate_titles(bundle.user_text());
  } catch (const std::invalid_argument&) {
    titles = bundle.meta.test_candidate_titles;
  }

  std::vector<std::string> ordered;
  switch (config.policy) {
    case MockPolicy::kTruthFirst: {
      const std::string& truth = bundle.meta.truth_title;
      if (truth.empty()) throw LlmError("truth-first mock needs the hidden truth title");
      ordered.push_back(truth);
      for (const auto& t : titles) {
        if (t != truth) ordered.push_back(t);
      }
      break;
    }
    case MockPolicy::kPresentedOrder:
      ordered = titles;
      break;
    case MockPolicy::kOracle: {
      struct Keyed {
        std::string title;
        double score;
        std::uint64_t tie;
      };
      std::vector<Keyed> keyed;
      for (const auto& t : titles) {
        auto it = config.oracle.find(t);
        keyed.push_back({t, it == config.oracle.end() ? 0.0 : it->second,
                         derive_seed(config.seed, "mock-tie", t)});
      }
      std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.tie != b.tie) return a.tie < b.tie;
        return a.title < b.title;
      });
      for (auto& k : keyed) ordered.push_back(std::move(k.title));
      break;
    }
  }

  std::vector<std::string> injected;
  for (int j = 0; j < config.hallucinations; ++j) {
    injected.push_back("Unlisted Feature Zq" + std::to_string(j + 1));
  }
  for (int j = 0; j < config.duplicates && !ordered.empty(); ++j) {
    injected.push_back(ordered[ordered.size() - 1 - static_cast<std::size_t>(j) % ordered.size()]);
  }
  const std::size_t at = std::min(config.inject_after.value_or(ordered.size()), ordered.size());
  ordered.insert(ordered.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(),
                 injected.end());

  std::string out;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    out += std::to_string(i + 1) + ". " + ordered[i] + "\n";
  }
  return out;
}

BackendReply MockBackend::generate(const prompts::PromptBundle& bundle, const CompletionParams&) {
  return BackendReply{mock_rank(bundle, config_), 0, 0.0};
}

BackendReply ReplayBackend::generate(const prompts::PromptBundle& bundle,
                                     const CompletionParams&) {
  const std::string hash = prompt_hash(bundle);
  auto it = responses_.find(hash);
  if (it == responses_.end()) throw LlmError("no stored completion for prompt " + hash);
  return BackendReply{it->second, 0, 0.0};
}

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

CachingBackend::CachingBackend(Backend& inner, std::optional<std::filesystem::path> path,
                               bool bypass)
    : inner_(inner), bypass_(bypass) {
  if (!path) return;
  if (std::filesystem::exists(*path)) {
    std::ifstream in(*path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        json rec = json::parse(line);
        entries_[rec.at("key").get<std::string>()] = rec.at("response").get<std::string>();
      } catch (const json::exception&) {
        // A torn final line from an interrupted run; the entry is refetched.
      }
    }
  }
  out_.open(*path, std::ios::app);
  if (!out_) throw LlmError("cannot open response cache: " + path->string());
}

std::string CachingBackend::cache_key(const prompts::PromptBundle& bundle,
                                      const CompletionParams& params) {
  json p = to_json(params);
  p.erase("timeout_ms");
  return sha256_hex(prompt_hash(bundle) + p.dump());
}

BackendReply CachingBackend::generate(const prompts::PromptBundle& bundle,
                                      const CompletionParams& params) {
  const std::string key = cache_key(bundle, params);
  if (!bypass_) {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      ++hits_;
      return BackendReply{it->second, 0, 0.0};
    }
  }
  BackendReply reply = inner_.generate(bundle, params);
  std::lock_guard lock(mu_);
  ++misses_;
  entries_[key] = reply.text;
  if (out_.is_open()) {
    out_ << json{{"key", key}, {"response", reply.text}}.dump() << '\n';
    out_.flush();
  }
  return reply;
}

std::size_t CachingBackend::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t CachingBackend::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

}  // namespace llmsrec::llm
