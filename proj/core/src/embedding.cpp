#include "llmsrec/embedding.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include <unordered_set>

#include <json.hpp>

#include "llmsrec/hashing.hpp"
#include "llmsrec/rng.hpp"

namespace llmsrec::retrieval {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Hash provider
// ---------------------------------------------------------------------------

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw EmbeddingError("embedding dimension must be positive");
}

std::string HashEmbeddingProvider::model_id() const {
  return "hash-embed-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

std::vector<double> HashEmbeddingProvider::embed_one(const std::string& text) const {
  std::vector<double> v(dim_, 0.0);
  auto add_segment = [&](std::string_view segment) {
    Rng rng(derive_seed(seed_, "hash-embed", segment));
    // Box-Muller pairs; portable unlike std::normal_distribution.
    for (std::size_t i = 0; i < dim_; i += 2) {
      double u1 = uniform_unit(rng);
      double u2 = uniform_unit(rng);
      double r = std::sqrt(-2.0 * std::log(1.0 - u1));
      v[i] += r * std::cos(2.0 * std::numbers::pi * u2);
      if (i + 1 < dim_) v[i + 1] += r * std::sin(2.0 * std::numbers::pi * u2);
    }
  };
  std::string_view rest(text);
  if (rest.empty()) {
    add_segment("");
  } else {
    while (true) {
      auto pos = rest.find(", ");
      add_segment(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 2);
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<std::vector<double>> HashEmbeddingProvider::embed_batch(
    std::span<const std::string> texts) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

std::size_t HashEmbeddingProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---------------------------------------------------------------------------
// HTTP provider
// ---------------------------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config,
                                             std::shared_ptr<net::HttpTransport> transport,
                                             net::Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!transport_) {
    transport_ = std::make_shared<net::HttplibTransport>(config_.base_url, config_.timeout);
  }
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_batch(
    std::span<const std::string> texts) {
  json request = {{"model", config_.model}, {"input", json::array()}};
  for (const auto& t : texts) request["input"].push_back(t);

  net::Headers headers;
  if (auto key = net::env_or_empty(config_.api_key_env); !key.empty()) {
    headers.emplace("Authorization", "Bearer " + key);
  }
  auto outcome = net::post_with_retry(*transport_, "/embeddings", request.dump(), headers,
                                      config_.retry, sleeper_);
  {
    std::lock_guard lock(mu_);
    ++calls_;
    retries_ += outcome.retries;
  }

  json response;
  try {
    response = json::parse(outcome.response.body);
  } catch (const json::exception& e) {
    throw EmbeddingError(std::string("embedding response is not JSON: ") + e.what());
  }
  if (!response.contains("data") || !response["data"].is_array() ||
      response["data"].size() != texts.size()) {
    throw EmbeddingError("embedding response has no data array matching the input count");
  }
  std::vector<std::vector<double>> out(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& entry = response["data"][i];
    // Providers may return entries out of order; honor "index" when present.
    std::size_t slot = entry.contains("index") ? entry["index"].get<std::size_t>() : i;
    if (slot >= texts.size()) throw EmbeddingError("embedding index out of range");
    out[slot] = entry.at("embedding").get<std::vector<double>>();
  }
  return out;
}

std::size_t HttpEmbeddingProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

int HttpEmbeddingProvider::total_retries() const {
  std::lock_guard lock(mu_);
  return retries_;
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) {
    std::ifstream in(*path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        json rec = json::parse(line);
        EmbeddingVector vec{rec.at("vector").get<std::vector<double>>(),
                            rec.at("model_id").get<std::string>()};
        insert_locked(rec.at("key").get<std::string>(), std::move(vec), false);
      } catch (const json::exception& e) {
        throw EmbeddingError("corrupt embedding cache line " + std::to_string(line_no) +
                             " in " + path_->string() + ": " + e.what());
      }
    }
  }
  out_.open(*path_, std::ios::app);
  if (!out_) throw EmbeddingError("cannot open embedding cache for append: " + path_->string());
}

std::string EmbeddingCache::key(const std::string& model_id, const std::string& text) {
  return sha256_hex(model_id + text);
}

std::optional<EmbeddingVector> EmbeddingCache::get(const std::string& model_id,
                                                   const std::string& text) const {
  const std::string k = key(model_id, text);
  std::lock_guard lock(mu_);
  auto it = entries_.find(k);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& model_id, const std::string& text,
                         std::vector<double> values) {
  const std::string k = key(model_id, text);
  std::lock_guard lock(mu_);
  insert_locked(k, EmbeddingVector{std::move(values), model_id}, true);
}

void EmbeddingCache::insert_locked(const std::string& key, EmbeddingVector vec, bool persist) {
  if (vec.values.empty()) throw EmbeddingError("empty embedding vector");
  for (double x : vec.values) {
    if (!std::isfinite(x)) throw EmbeddingError("non-finite value in embedding vector");
  }
  if (dim_ && *dim_ != vec.values.size()) {
    throw EmbeddingError("embedding dimension mismatch: cache holds " + std::to_string(*dim_) +
                         ", got " + std::to_string(vec.values.size()));
  }
  dim_ = vec.values.size();
  if (persist && out_.is_open()) {
    json rec = {{"key", key}, {"model_id", vec.model_id}, {"vector", vec.values}};
    out_ << rec.dump() << '\n';
    out_.flush();
  }
  entries_.insert_or_assign(key, std::move(vec));
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::optional<std::size_t> EmbeddingCache::dimension() const {
  std::lock_guard lock(mu_);
  return dim_;
}

// ---------------------------------------------------------------------------
// Front doors
// ---------------------------------------------------------------------------

EmbeddingVector embed(const std::string& text, EmbeddingProvider& provider,
                      EmbeddingCache& cache) {
  const std::string model = provider.model_id();
  if (auto hit = cache.get(model, text)) return *hit;
  std::string batch[] = {text};
  auto vectors = provider.embed_batch(batch);
  if (vectors.size() != 1) throw EmbeddingError("provider returned wrong number of vectors");
  cache.put(model, text, vectors[0]);
  return EmbeddingVector{std::move(vectors[0]), model};
}

std::vector<EmbeddingVector> embed_all(std::span<const std::string> texts,
                                       EmbeddingProvider& provider, EmbeddingCache& cache,
                                       std::size_t batch_size, std::size_t parallelism) {
  const std::string model = provider.model_id();
  batch_size = std::max<std::size_t>(1, batch_size);
  parallelism = std::max<std::size_t>(1, parallelism);

  std::vector<std::string> missing;
  std::unordered_set<std::string> queued;
  for (const auto& t : texts) {
    if (!cache.get(model, t) && queued.insert(t).second) missing.push_back(t);
  }

  std::vector<std::span<const std::string>> batches;
  for (std::size_t i = 0; i < missing.size(); i += batch_size) {
    batches.emplace_back(missing.data() + i, std::min(batch_size, missing.size() - i));
  }
  for (std::size_t start = 0; start < batches.size(); start += parallelism) {
    std::vector<std::future<std::vector<std::vector<double>>>> inflight;
    const std::size_t end = std::min(batches.size(), start + parallelism);
    for (std::size_t b = start; b < end; ++b) {
      inflight.push_back(std::async(std::launch::async,
                                    [&provider, batch = batches[b]] {
                                      return provider.embed_batch(batch);
                                    }));
    }
    for (std::size_t b = start; b < end; ++b) {
      auto vectors = inflight[b - start].get();
      if (vectors.size() != batches[b].size()) {
        throw EmbeddingError("provider returned wrong number of vectors");
      }
      for (std::size_t i = 0; i < vectors.size(); ++i) {
        cache.put(model, batches[b][i], std::move(vectors[i]));
      }
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(*cache.get(model, t));
  return out;
}

}  // namespace llmsrec::retrieval
