#include "llmsrec/demo.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace llmsrec::demo {

TaskTemplate parse_task(const std::string& name) {
  if (name == "T1" || name == "t1" || name == "next-item") return TaskTemplate::kNextItem;
  if (name == "T2" || name == "t2" || name == "contrast-pair") return TaskTemplate::kContrastPair;
  if (name == "T3" || name == "t3" || name == "ranked-items") return TaskTemplate::kRankedItems;
  throw DemoError("unknown task template: " + name);
}

std::string task_name(TaskTemplate task) {
  switch (task) {
    case TaskTemplate::kNextItem: return "T1";
    case TaskTemplate::kContrastPair: return "T2";
    case TaskTemplate::kRankedItems: return "T3";
  }
  return "?";
}

std::vector<ItemId> distinct_in_order(std::span<const ItemId> items) {
  std::unordered_set<ItemId> seen;
  std::vector<ItemId> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    if (seen.insert(item).second) out.push_back(item);
  }
  return out;
}

namespace {

std::vector<ItemId> ranking_with_first(const ItemId& first, std::span<const ItemId> candidates,
                                       Rng& rng) {
  std::vector<ItemId> rest;
  rest.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c != first) rest.push_back(c);
  }
  shuffle(rest, rng);
  rest.insert(rest.begin(), first);
  return rest;
}

}  // namespace

Demonstration build_standard_demo(const UserExample& member, TaskTemplate task, int m,
                                  const Catalog& catalog, Rng& rng, bool with_candidates) {
  if (member.history.empty()) {
    throw DemoError("demonstration user " + member.user + " has an empty history");
  }
  Demonstration demo;
  demo.task = task;
  demo.user = member.user;
  demo.history = member.history;
  const std::unordered_set<ItemId> exclude(member.history.begin(), member.history.end());

  const bool needs_candidates = task == TaskTemplate::kRankedItems || with_candidates;
  if (needs_candidates) {
    demo.candidates = corpus::build_candidate_set(member.truth, catalog, m, exclude, rng);
  }

  switch (task) {
    case TaskTemplate::kNextItem:
      demo.label = {member.truth};
      break;
    case TaskTemplate::kContrastPair: {
      std::vector<ItemId> negatives;
      if (needs_candidates) {
        for (const auto& c : demo.candidates) {
          if (c != member.truth) negatives.push_back(c);
        }
      } else {
        for (const auto& item : catalog.items()) {
          if (item.id != member.truth && !exclude.count(item.id)) negatives.push_back(item.id);
        }
      }
      if (negatives.empty()) {
        throw DemoError("contrast-pair demonstration needs at least one non-truth item");
      }
      demo.label = {member.truth, negatives[uniform_index(rng, negatives.size())]};
      break;
    }
    case TaskTemplate::kRankedItems:
      demo.label = ranking_with_first(member.truth, demo.candidates, rng);
      break;
  }
  return demo;
}

Sequence aggregate_history(std::span<const Sequence> member_histories, std::size_t max_h,
                           HistoryOrder order) {
  if (max_h < 1) throw DemoError("max_h must be >= 1");
  if (member_histories.empty()) throw DemoError("aggregate_history: no members");
  const bool all_empty = std::all_of(member_histories.begin(), member_histories.end(),
                                     [](const Sequence& h) { return h.empty(); });
  if (all_empty) throw DemoError("aggregate_history: every member history is empty");

  Sequence out;
  for (std::size_t depth = 0; out.size() < max_h; ++depth) {
    bool took_any = false;
    for (const auto& history : member_histories) {
      if (depth >= history.size()) continue;
      out.push_back(history[history.size() - 1 - depth]);
      took_any = true;
      if (out.size() == max_h) break;
    }
    if (!took_any) break;
  }
  if (order == HistoryOrder::kChronological) std::reverse(out.begin(), out.end());
  return out;
}

std::vector<ItemId> aggregate_candidates(std::span<const ItemId> member_truths,
                                         std::span<const ItemId> history,
                                         const Catalog& catalog, int m, Rng& rng) {
  if (m < 1) throw DemoError("candidate count must be >= 1");
  if (member_truths.size() > static_cast<std::size_t>(m)) {
    throw DemoError("more member truths (" + std::to_string(member_truths.size()) +
                    ") than candidate slots (" + std::to_string(m) + ")");
  }
  std::vector<ItemId> out = distinct_in_order(member_truths);
  std::unordered_set<ItemId> exclude(out.begin(), out.end());
  exclude.insert(history.begin(), history.end());

  std::vector<std::size_t> eligible;
  const auto items = catalog.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!exclude.count(items[i].id)) eligible.push_back(i);
  }
  const std::size_t fillers = static_cast<std::size_t>(m) - out.size();
  if (eligible.size() < fillers) {
    throw DemoError("item pool too small for aggregated candidates: need " +
                    std::to_string(fillers) + " fillers, have " + std::to_string(eligible.size()));
  }
  for (std::size_t idx : sample_indices(eligible.size(), fillers, rng)) {
    out.push_back(items[eligible[idx]].id);
  }
  shuffle(out, rng);
  return out;
}

std::vector<ItemId> aggregate_ranking(std::span<const ItemId> member_truths,
                                      std::span<const ItemId> candidates, Rng& rng) {
  std::vector<ItemId> head = distinct_in_order(member_truths);
  std::unordered_set<ItemId> in_head(head.begin(), head.end());
  std::unordered_set<ItemId> in_candidates(candidates.begin(), candidates.end());
  for (const auto& t : head) {
    if (!in_candidates.count(t)) throw DemoError("member truth " + t + " missing from candidates");
  }
  std::vector<ItemId> tail;
  for (const auto& c : candidates) {
    if (!in_head.count(c)) tail.push_back(c);
  }
  shuffle(tail, rng);
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

AggregatedDemonstration aggregate_members(std::span<const UserExample> members,
                                          retrieval::RankedDemonstrations ranked,
                                          std::size_t max_h, int m, const Catalog& catalog,
                                          Rng& rng, HistoryOrder order) {
  if (members.empty()) throw DemoError("aggregated demonstration needs at least one member");
  if (members.size() != ranked.size()) throw DemoError("members and ranking differ in size");

  std::vector<Sequence> histories;
  std::vector<ItemId> truths;
  for (const auto& member : members) {
    histories.push_back(member.history);
    truths.push_back(member.truth);
  }
  AggregatedDemonstration agg;
  agg.members = std::move(ranked);
  agg.history = aggregate_history(histories, max_h, order);
  agg.candidates = aggregate_candidates(truths, agg.history, catalog, m, rng);
  agg.ranking = aggregate_ranking(truths, agg.candidates, rng);
  return agg;
}

AggregatedDemonstration build_aggregated_demo(const corpus::EvalInstance& test,
                                              std::span<const UserExample> pool, std::size_t k,
                                              retrieval::Retriever& retriever, std::size_t max_h,
                                              int m, const Catalog& catalog, Rng& rng,
                                              HistoryOrder order) {
  if (k < 1) throw DemoError("k must be >= 1");
  auto ranked = retrieval::select_demonstrations(test, pool, k, retriever);

  std::unordered_map<corpus::UserId, const UserExample*> by_user;
  for (const auto& entry : pool) by_user.emplace(entry.user, &entry);
  std::vector<UserExample> members;
  members.reserve(ranked.size());
  for (const auto& scored : ranked) members.push_back(*by_user.at(scored.user));

  return aggregate_members(members, std::move(ranked), max_h, m, catalog, rng, order);
}

}  // namespace llmsrec::demo
