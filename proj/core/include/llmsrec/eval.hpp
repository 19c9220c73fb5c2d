#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "llmsrec/corpus.hpp"

namespace llmsrec::eval {

using corpus::ItemId;

class UnparseableResponse : public std::runtime_error {
 public:
  UnparseableResponse() : std::runtime_error("unparseable response") {}
};

enum class MatchTier { kNone, kExact, kNormalized, kContainment };

struct ParsedLine {
  std::string raw;
  std::string text;
  std::optional<ItemId> item;
  MatchTier tier = MatchTier::kNone;
  /// Matched a candidate that an earlier line already claimed.
  bool duplicate = false;
};

struct ParsedRanking {
  std::vector<ParsedLine> lines;
  /// 1-based emitted-line position of each candidate's first occurrence.
  std::map<ItemId, int> matched_rank;
  /// 1-based position among first-occurrence candidate lines only.
  std::map<ItemId, int> candidate_rank;
  std::size_t n_output_lines = 0;

  std::size_t matched_lines() const { return matched_rank.size(); }
};

/// Lower-case, drop apostrophes, other ASCII punctuation to spaces, collapse
/// whitespace.
std::string normalize_title(std::string_view title);
/// normalize_title plus removal of a leading "the", "a" or "an".
std::string normalize_without_article(std::string_view title);

/// Recommendation lines are `^\s*\d+[.)]\s*(.+)$`. Each is matched against
/// candidate titles by exact, normalized, then normalized-containment
/// comparison. Throws UnparseableResponse when there are no such lines.
ParsedRanking parse_ranked_list(std::string_view text, std::span<const corpus::Item> candidates);

enum class RankBasis { kEmittedLine, kCandidateOnly };
enum class CirDenominator { kEmittedLines, kCandidateCount };

std::optional<int> truth_rank(const ParsedRanking& parsed, const ItemId& truth,
                              RankBasis basis = RankBasis::kEmittedLine);

/// Single relevant item: 1/log2(r+1) when the truth sits at rank r <= n.
double ndcg_at(const ParsedRanking& parsed, const ItemId& truth, int n,
               RankBasis basis = RankBasis::kEmittedLine);

/// Matched candidate lines over emitted lines (or over `m`).
double cir(const ParsedRanking& parsed, CirDenominator denominator = CirDenominator::kEmittedLines,
           std::size_t m = 0);

inline const std::vector<int> kDefaultCutoffs = {5, 10, 20};

struct MetricSet {
  std::map<int, double> ndcg;
  double cir = 0.0;
  std::optional<int> truth_rank;

  bool operator==(const MetricSet&) const = default;
};

struct ScoringOptions {
  std::vector<int> cutoffs = kDefaultCutoffs;
  RankBasis rank_basis = RankBasis::kEmittedLine;
  CirDenominator cir_denominator = CirDenominator::kEmittedLines;
};

MetricSet score(const ParsedRanking& parsed, const ItemId& truth, std::size_t m,
                const ScoringOptions& options = {});
/// Metrics for a response that could not be parsed: every value zero.
MetricSet total_miss(const ScoringOptions& options = {});

/// Per-metric arithmetic mean (truth_rank dropped).
MetricSet average(std::span<const MetricSet> sets);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Keys "ndcg@N" and "cir". std is the sample (n-1) standard deviation, 0 for
/// a single run.
using RunSummary = std::map<std::string, MeanStd>;

RunSummary aggregate_runs(std::span<const MetricSet> per_run);

}  // namespace llmsrec::eval
