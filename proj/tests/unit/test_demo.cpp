#include <gtest/gtest.h>

#include <set>

#include "llmsrec/demo.hpp"
#include "support/oracles.hpp"

using namespace llmsrec;
using namespace llmsrec::demo;
using corpus::UserExample;

TEST(StandardDemo, RankedItemsLabelStartsWithTruth) {
  auto catalog = fixture::catalog(100);
  UserExample member{"u", {"i1", "i2", "i3"}, "i4"};
  Rng rng(5);
  auto d = build_standard_demo(member, TaskTemplate::kRankedItems, 20, catalog, rng);
  ASSERT_EQ(d.candidates.size(), 20u);
  ASSERT_EQ(d.label.size(), 20u);
  EXPECT_EQ(d.label[0], "i4");
  EXPECT_EQ(std::set<ItemId>(d.label.begin(), d.label.end()),
            std::set<ItemId>(d.candidates.begin(), d.candidates.end()));
  for (const auto& c : d.candidates) {
    EXPECT_TRUE(c == "i4" || (c != "i1" && c != "i2" && c != "i3"));
  }
}

TEST(StandardDemo, NextItemAndContrastPair) {
  auto catalog = fixture::catalog(30);
  UserExample member{"u", {"i1", "i2"}, "i3"};
  Rng rng(1);
  auto t1 = build_standard_demo(member, TaskTemplate::kNextItem, 20, catalog, rng);
  EXPECT_EQ(t1.label, (std::vector<ItemId>{"i3"}));
  EXPECT_TRUE(t1.candidates.empty());

  auto t2 = build_standard_demo(member, TaskTemplate::kContrastPair, 20, catalog, rng, true);
  ASSERT_EQ(t2.label.size(), 2u);
  EXPECT_EQ(t2.label[0], "i3");
  EXPECT_NE(t2.label[1], "i3");
  EXPECT_EQ(t2.candidates.size(), 20u);
  EXPECT_NE(std::find(t2.candidates.begin(), t2.candidates.end(), t2.label[1]),
            t2.candidates.end());
}

TEST(StandardDemo, EmptyHistoryRejected) {
  auto catalog = fixture::catalog(30);
  Rng rng(1);
  EXPECT_THROW(build_standard_demo({"u", {}, "i1"}, TaskTemplate::kNextItem, 20, catalog, rng),
               DemoError);
}

TEST(AggregateHistory, HandExample) {
  std::vector<Sequence> h = {{"a1", "a2", "a3"}, {"b1", "b2"}};
  EXPECT_EQ(aggregate_history(h, 50, HistoryOrder::kInsertion),
            (Sequence{"a3", "b2", "a2", "b1", "a1"}));
  EXPECT_EQ(aggregate_history(h, 50), (Sequence{"a1", "b1", "a2", "b2", "a3"}));
}

TEST(AggregateHistory, SingleMemberKeepsRecentChronological) {
  Sequence h;
  for (int i = 0; i < 80; ++i) h.push_back("i" + std::to_string(i));
  std::vector<Sequence> one = {h};
  auto out = aggregate_history(one, 50);
  EXPECT_EQ(out, Sequence(h.begin() + 30, h.end()));
}

TEST(AggregateHistory, CapMidRound) {
  std::vector<Sequence> h = {{"a1", "a2", "a3"}, {"b1", "b2"}};
  EXPECT_EQ(aggregate_history(h, 2), (Sequence{"b2", "a3"}));
  std::vector<Sequence> three = {{"a1"}, {"b1"}, {"c1"}};
  EXPECT_EQ(aggregate_history(three, 2, HistoryOrder::kInsertion), (Sequence{"a1", "b1"}));
}

TEST(AggregateHistory, ExhaustedMembersSkipped) {
  std::vector<Sequence> h = {{"a1"}, {}, {"c1", "c2", "c3"}};
  EXPECT_EQ(aggregate_history(h, 50, HistoryOrder::kInsertion),
            (Sequence{"a1", "c3", "c2", "c1"}));
}

TEST(AggregateHistory, Degenerate) {
  std::vector<Sequence> none;
  EXPECT_THROW(aggregate_history(none, 5), DemoError);
  std::vector<Sequence> empty = {{}, {}};
  EXPECT_THROW(aggregate_history(empty, 5), DemoError);
  std::vector<Sequence> one = {{"a"}};
  EXPECT_THROW(aggregate_history(one, 0), DemoError);
}

TEST(AggregateCandidates, TruthsPlusFillers) {
  auto catalog = fixture::catalog(100);
  std::vector<ItemId> truths = {"i1", "i2", "i3"};
  std::vector<ItemId> history = {"i4", "i5"};
  Rng a(9), b(9);
  auto c = aggregate_candidates(truths, history, catalog, 20, a);
  EXPECT_EQ(c, aggregate_candidates(truths, history, catalog, 20, b));
  ASSERT_EQ(c.size(), 20u);
  EXPECT_EQ(std::set<ItemId>(c.begin(), c.end()).size(), 20u);
  for (const auto& t : truths) EXPECT_NE(std::find(c.begin(), c.end(), t), c.end());
  for (const auto& h : history) EXPECT_EQ(std::find(c.begin(), c.end(), h), c.end());
}

TEST(AggregateCandidates, KEqualsM) {
  auto catalog = fixture::catalog(10);
  std::vector<ItemId> truths = {"i1", "i2", "i3"};
  Rng rng(2);
  auto c = aggregate_candidates(truths, {}, catalog, 3, rng);
  EXPECT_EQ(std::set<ItemId>(c.begin(), c.end()), std::set<ItemId>(truths.begin(), truths.end()));
  EXPECT_THROW(aggregate_candidates(truths, {}, catalog, 2, rng), DemoError);
}

TEST(AggregateCandidates, DuplicateTruthsCollapse) {
  auto catalog = fixture::catalog(30);
  std::vector<ItemId> truths = {"i1", "i1", "i2"};
  Rng rng(2);
  auto c = aggregate_candidates(truths, {}, catalog, 5, rng);
  EXPECT_EQ(c.size(), 5u);
  EXPECT_EQ(std::count(c.begin(), c.end(), "i1"), 1);
}

TEST(AggregateRanking, HeadIsTruthsInOrder) {
  std::vector<ItemId> truths = {"t2", "t1"};
  std::vector<ItemId> cands = {"x", "t1", "y", "t2", "z"};
  Rng a(1), b(2);
  auto ra = aggregate_ranking(truths, cands, a);
  auto rb = aggregate_ranking(truths, cands, b);
  EXPECT_EQ(ra[0], "t2");
  EXPECT_EQ(ra[1], "t1");
  EXPECT_EQ(rb[0], "t2");
  EXPECT_EQ(rb[1], "t1");
  EXPECT_EQ(std::set<ItemId>(ra.begin(), ra.end()), std::set<ItemId>(cands.begin(), cands.end()));

  std::vector<ItemId> single = {"t"};
  Rng c(3);
  EXPECT_EQ(aggregate_ranking(single, single, c), single);
  std::vector<ItemId> missing = {"q"};
  EXPECT_THROW(aggregate_ranking(missing, cands, c), DemoError);
}

TEST(BuildAggregated, SevenMembersOccupyTopSeven) {
  auto log = fixture::synthetic_log(60, 120, 10, 30, 21);
  auto split = corpus::leave_one_out_split(log);
  retrieval::Retriever r({retrieval::SimilarityKind::kOverlap, 0}, log.catalog);
  corpus::EvalInstance test{split.test[0].user, split.test[0].history, {}, split.test[0].truth};
  Rng rng(4);
  auto agg = build_aggregated_demo(test, split.train_pool, 7, r, 50, 20, log.catalog, rng);
  ASSERT_EQ(agg.members.size(), 7u);
  EXPECT_LE(agg.history.size(), 50u);
  EXPECT_EQ(agg.candidates.size(), 20u);

  std::map<corpus::UserId, ItemId> truth_of;
  for (const auto& e : split.train_pool) truth_of[e.user] = e.truth;
  std::vector<ItemId> truths;
  for (const auto& m : agg.members) truths.push_back(truth_of.at(m.user));
  auto head = distinct_in_order(truths);
  for (std::size_t i = 0; i < head.size(); ++i) EXPECT_EQ(agg.ranking[i], head[i]);
}
