#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmsrec/http.hpp"

namespace llmsrec::retrieval {

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;

  bool operator==(const EmbeddingVector&) const = default;
};

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string model_id() const = 0;
  /// One vector per input text, in input order.
  virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) = 0;
  /// Number of embed_batch calls issued so far.
  virtual std::size_t calls() const = 0;
};

/// Offline stand-in for an embedding model. Each ", "-separated segment of the
/// text is hashed to a seeded Gaussian direction; the sum is L2-normalised.
/// Equal texts map to equal vectors and texts sharing titles land closer.
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dim = 64, std::uint64_t seed = 0);
  std::string model_id() const override;
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;
  std::size_t calls() const override;

  std::vector<double> embed_one(const std::string& text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

struct HttpEmbeddingConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "text-embedding-ada-002";
  std::string api_key_env = "OPENAI_API_KEY";
  net::RetryPolicy retry;
  std::chrono::milliseconds timeout{60000};
};

/// OpenAI-compatible `POST {base}/embeddings` client.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig config,
                                 std::shared_ptr<net::HttpTransport> transport = nullptr,
                                 net::Sleeper sleeper = net::real_sleeper());
  std::string model_id() const override { return config_.model; }
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;
  std::size_t calls() const override;
  int total_retries() const;

 private:
  HttpEmbeddingConfig config_;
  std::shared_ptr<net::HttpTransport> transport_;
  net::Sleeper sleeper_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
  int retries_ = 0;
};

/// In-memory embedding cache, optionally persisted as JSONL with one
/// `{"key", "model_id", "vector"}` record per line. Access is serialized by
/// an internal mutex.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  /// Loads existing records from `path` (if the file exists) and appends new
  /// ones to it.
  explicit EmbeddingCache(std::filesystem::path path);

  static std::string key(const std::string& model_id, const std::string& text);

  std::optional<EmbeddingVector> get(const std::string& model_id, const std::string& text) const;
  void put(const std::string& model_id, const std::string& text, std::vector<double> values);
  std::size_t size() const;
  std::optional<std::size_t> dimension() const;

 private:
  void insert_locked(const std::string& key, EmbeddingVector vec, bool persist);

  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> entries_;
  std::optional<std::size_t> dim_;
};

EmbeddingVector embed(const std::string& text, EmbeddingProvider& provider,
                      EmbeddingCache& cache);

/// Embeds every text, fetching cache misses in batches with at most
/// `parallelism` concurrent provider calls.
std::vector<EmbeddingVector> embed_all(std::span<const std::string> texts,
                                       EmbeddingProvider& provider, EmbeddingCache& cache,
                                       std::size_t batch_size = 64,
                                       std::size_t parallelism = 4);

}  // namespace llmsrec::retrieval
