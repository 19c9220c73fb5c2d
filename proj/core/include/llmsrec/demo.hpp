#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "llmsrec/corpus.hpp"
#include "llmsrec/retrieval.hpp"
#include "llmsrec/rng.hpp"

namespace llmsrec::demo {

using corpus::Catalog;
using corpus::ItemId;
using corpus::Sequence;
using corpus::UserExample;

class DemoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// T1 labels the next item, T2 a (positive, negative) pair, T3 a full
/// ranking with the next item first.
enum class TaskTemplate { kNextItem, kContrastPair, kRankedItems };

TaskTemplate parse_task(const std::string& name);
std::string task_name(TaskTemplate task);

struct Demonstration {
  TaskTemplate task = TaskTemplate::kRankedItems;
  corpus::UserId user;
  Sequence history;
  /// Empty unless the task is T3 or the T1/T2 "with candidates" variant.
  std::vector<ItemId> candidates;
  /// T1: {truth}; T2: {positive, negative}; T3: ranking of `candidates`.
  std::vector<ItemId> label;
};

Demonstration build_standard_demo(const UserExample& member, TaskTemplate task, int m,
                                  const Catalog& catalog, Rng& rng,
                                  bool with_candidates = false);

enum class HistoryOrder {
  /// Insertion order reversed: the last item shown is the most recent item of
  /// the most similar member.
  kChronological,
  /// Raw round-robin insertion order (ablation).
  kInsertion,
};

/// Round-robin over members in similarity order, newest item first within
/// each member, until `max_h` items are taken or every history is exhausted.
/// `member_histories` are oldest-to-newest.
Sequence aggregate_history(std::span<const Sequence> member_histories, std::size_t max_h,
                           HistoryOrder order = HistoryOrder::kChronological);

/// Distinct member truths plus random fillers (never a truth, never in
/// `history`), shuffled.
std::vector<ItemId> aggregate_candidates(std::span<const ItemId> member_truths,
                                         std::span<const ItemId> history,
                                         const Catalog& catalog, int m, Rng& rng);

/// Member truths in similarity order, then the rest of `candidates` shuffled.
std::vector<ItemId> aggregate_ranking(std::span<const ItemId> member_truths,
                                      std::span<const ItemId> candidates, Rng& rng);

struct AggregatedDemonstration {
  retrieval::RankedDemonstrations members;
  Sequence history;
  std::vector<ItemId> candidates;
  std::vector<ItemId> ranking;
};

/// Builds one aggregated demonstration from members already in similarity
/// order (`members[i]` corresponds to `ranked[i]`).
AggregatedDemonstration aggregate_members(std::span<const UserExample> members,
                                          retrieval::RankedDemonstrations ranked,
                                          std::size_t max_h, int m, const Catalog& catalog,
                                          Rng& rng,
                                          HistoryOrder order = HistoryOrder::kChronological);

/// select_demonstrations -> aggregate_history -> aggregate_candidates ->
/// aggregate_ranking.
AggregatedDemonstration build_aggregated_demo(const corpus::EvalInstance& test,
                                              std::span<const UserExample> pool, std::size_t k,
                                              retrieval::Retriever& retriever, std::size_t max_h,
                                              int m, const Catalog& catalog, Rng& rng,
                                              HistoryOrder order = HistoryOrder::kChronological);

/// Distinct items in first-occurrence order.
std::vector<ItemId> distinct_in_order(std::span<const ItemId> items);

}  // namespace llmsrec::demo
