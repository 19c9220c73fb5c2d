#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmsrec/corpus.hpp"
#include "llmsrec/embedding.hpp"

namespace llmsrec::retrieval {

using corpus::ItemId;
using corpus::UserId;

inline constexpr std::size_t kDefaultTextWindow = 50;

/// Titles of the most recent `window` items, oldest first, joined by ", ".
std::string sequence_text(std::span<const ItemId> history, const corpus::Catalog& catalog,
                          std::size_t window = kDefaultTextWindow);

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Size of the intersection of the two histories viewed as sets.
std::size_t overlap_score(std::span<const ItemId> a, std::span<const ItemId> b);

enum class SimilarityKind { kRandom, kOverlap, kEmbedding };

SimilarityKind parse_similarity(const std::string& name);
std::string similarity_name(SimilarityKind kind);

struct SimilarityMethod {
  SimilarityKind kind = SimilarityKind::kEmbedding;
  std::uint64_t seed = 0;
};

struct ScoredUser {
  UserId user;
  double score = 0.0;

  bool operator==(const ScoredUser&) const = default;
};

/// Most similar first; ties broken by ascending user id.
using RankedDemonstrations = std::vector<ScoredUser>;

/// Scores training users against a test user. Holds the embedding provider
/// and cache for the embedding method; the other methods need neither.
/// Not thread-safe: pool vectors are memoised per user.
class Retriever {
 public:
  Retriever(SimilarityMethod method, const corpus::Catalog& catalog,
            EmbeddingProvider* provider = nullptr, EmbeddingCache* cache = nullptr,
            std::size_t text_window = kDefaultTextWindow);

  const SimilarityMethod& method() const { return method_; }

  /// Full ranking of `pool` minus the test user's own entry.
  RankedDemonstrations rank(const UserId& test_user, std::span<const ItemId> test_history,
                            std::span<const corpus::UserExample> pool);

  /// Top-k prefix of rank().
  RankedDemonstrations select(const UserId& test_user, std::span<const ItemId> test_history,
                              std::span<const corpus::UserExample> pool, std::size_t k);

  /// Embeds every pool history up front (bounded parallel fetch).
  void warm(std::span<const corpus::UserExample> pool, std::size_t parallelism = 4);

 private:
  double score(const UserId& test_user, std::span<const ItemId> test_history,
               const EmbeddingVector* test_vec, const corpus::UserExample& entry);

  SimilarityMethod method_;
  const corpus::Catalog* catalog_;
  EmbeddingProvider* provider_;
  EmbeddingCache* cache_;
  std::size_t window_;
  std::unordered_map<std::string, EmbeddingVector> pool_vectors_;
};

RankedDemonstrations select_demonstrations(const corpus::EvalInstance& test,
                                           std::span<const corpus::UserExample> pool,
                                           std::size_t k, Retriever& retriever);

}  // namespace llmsrec::retrieval
