#include "llmsrec/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <unordered_set>

namespace llmsrec::retrieval {

std::string sequence_text(std::span<const ItemId> history, const corpus::Catalog& catalog,
                          std::size_t window) {
  const std::size_t start = history.size() > window ? history.size() - window : 0;
  std::string out;
  for (std::size_t i = start; i < history.size(); ++i) {
    if (i > start) out += ", ";
    out += catalog.title(history[i]);
  }
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw EmbeddingError("cosine_similarity: length mismatch " + std::to_string(u.size()) +
                         " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw EmbeddingError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  return cosine_similarity(std::span<const double>(u.values), std::span<const double>(v.values));
}

std::size_t overlap_score(std::span<const ItemId> a, std::span<const ItemId> b) {
  std::unordered_set<ItemId> left(a.begin(), a.end());
  std::unordered_set<ItemId> counted;
  for (const auto& item : b) {
    if (left.count(item)) counted.insert(item);
  }
  return counted.size();
}

SimilarityKind parse_similarity(const std::string& name) {
  if (name == "random") return SimilarityKind::kRandom;
  if (name == "overlap") return SimilarityKind::kOverlap;
  if (name == "embedding") return SimilarityKind::kEmbedding;
  throw std::invalid_argument("unknown selection method: " + name);
}

std::string similarity_name(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::kRandom: return "random";
    case SimilarityKind::kOverlap: return "overlap";
    case SimilarityKind::kEmbedding: return "embedding";
  }
  return "unknown";
}

Retriever::Retriever(SimilarityMethod method, const corpus::Catalog& catalog,
                     EmbeddingProvider* provider, EmbeddingCache* cache, std::size_t text_window)
    : method_(method), catalog_(&catalog), provider_(provider), cache_(cache),
      window_(text_window) {
  if (method_.kind == SimilarityKind::kEmbedding && (!provider_ || !cache_)) {
    throw std::invalid_argument("embedding selection needs a provider and a cache");
  }
}

void Retriever::warm(std::span<const corpus::UserExample> pool, std::size_t parallelism) {
  if (method_.kind != SimilarityKind::kEmbedding) return;
  std::vector<std::string> texts;
  texts.reserve(pool.size());
  for (const auto& entry : pool) texts.push_back(sequence_text(entry.history, *catalog_, window_));
  embed_all(texts, *provider_, *cache_, 64, parallelism);
}

double Retriever::score(const UserId& test_user, std::span<const ItemId> test_history,
                        const EmbeddingVector* test_vec, const corpus::UserExample& entry) {
  switch (method_.kind) {
    case SimilarityKind::kRandom: {
      Rng rng(derive_seed(method_.seed, "random-select:" + test_user, entry.user));
      return uniform_unit(rng);
    }
    case SimilarityKind::kOverlap:
      return static_cast<double>(overlap_score(test_history, entry.history));
    case SimilarityKind::kEmbedding: {
      const std::string memo_key = entry.user + '\x1f' + std::to_string(entry.history.size());
      auto it = pool_vectors_.find(memo_key);
      if (it == pool_vectors_.end()) {
        auto vec = embed(sequence_text(entry.history, *catalog_, window_), *provider_, *cache_);
        it = pool_vectors_.emplace(memo_key, std::move(vec)).first;
      }
      return cosine_similarity(*test_vec, it->second);
    }
  }
  return 0.0;
}

RankedDemonstrations Retriever::rank(const UserId& test_user,
                                     std::span<const ItemId> test_history,
                                     std::span<const corpus::UserExample> pool) {
  std::optional<EmbeddingVector> test_vec;
  if (method_.kind == SimilarityKind::kEmbedding) {
    test_vec = embed(sequence_text(test_history, *catalog_, window_), *provider_, *cache_);
  }
  RankedDemonstrations ranked;
  ranked.reserve(pool.size());
  for (const auto& entry : pool) {
    if (entry.user == test_user) continue;
    ranked.push_back({entry.user, score(test_user, test_history,
                                        test_vec ? &*test_vec : nullptr, entry)});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredUser& a, const ScoredUser& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.user < b.user;
  });
  return ranked;
}

RankedDemonstrations Retriever::select(const UserId& test_user,
                                       std::span<const ItemId> test_history,
                                       std::span<const corpus::UserExample> pool, std::size_t k) {
  auto ranked = rank(test_user, test_history, pool);
  if (ranked.empty()) throw std::invalid_argument("demonstration pool is empty");
  if (k > ranked.size()) {
    throw std::invalid_argument("requested " + std::to_string(k) + " demonstrations but pool has " +
                                std::to_string(ranked.size()));
  }
  ranked.resize(k);
  return ranked;
}

RankedDemonstrations select_demonstrations(const corpus::EvalInstance& test,
                                           std::span<const corpus::UserExample> pool,
                                           std::size_t k, Retriever& retriever) {
  return retriever.select(test.user, test.history, pool, k);
}

}  // namespace llmsrec::retrieval
