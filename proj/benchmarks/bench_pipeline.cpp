#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "llmsrec/demo.hpp"
#include "llmsrec/eval.hpp"
#include "llmsrec/prompts.hpp"

using namespace llmsrec;

namespace {

corpus::Catalog make_catalog(int n) {
  std::vector<corpus::Item> items;
  for (int i = 0; i < n; ++i) items.push_back({"i" + std::to_string(i), "Movie Title " + std::to_string(i)});
  return corpus::Catalog(std::move(items));
}

std::string ranked_text(int m) {
  std::string text = "Here is the ranking:\n";
  for (int i = m - 1; i >= 0; --i) {
    text += std::to_string(m - i) + ". **Movie Title " + std::to_string(i) + "**\n";
  }
  return text;
}

}  // namespace

static void BM_ParseRankedList(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  auto catalog = make_catalog(m);
  const auto text = ranked_text(m);
  for (auto _ : state) benchmark::DoNotOptimize(eval::parse_ranked_list(text, catalog.items()));
}
BENCHMARK(BM_ParseRankedList)->Arg(20)->Arg(100);

static void BM_Ndcg(benchmark::State& state) {
  auto catalog = make_catalog(20);
  auto parsed = eval::parse_ranked_list(ranked_text(20), catalog.items());
  for (auto _ : state) {
    for (int n : {5, 10, 20}) benchmark::DoNotOptimize(eval::ndcg_at(parsed, "i7", n));
  }
}
BENCHMARK(BM_Ndcg);

static void BM_AggregateHistory(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::vector<corpus::Sequence> histories(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (int p = 0; p < 200; ++p) histories[j].push_back("m" + std::to_string(j) + "_" + std::to_string(p));
  }
  for (auto _ : state) benchmark::DoNotOptimize(demo::aggregate_history(histories, 50));
}
BENCHMARK(BM_AggregateHistory)->Arg(1)->Arg(3)->Arg(7);

static void BM_AssemblePrompt(benchmark::State& state) {
  auto catalog = make_catalog(500);
  auto reg = prompts::TemplateRegistry::builtin();
  std::vector<corpus::UserExample> members;
  retrieval::RankedDemonstrations ranked;
  for (int j = 0; j < 3; ++j) {
    corpus::UserExample ex{"m" + std::to_string(j), {}, "i" + std::to_string(400 + j)};
    for (int p = 0; p < 60; ++p) ex.history.push_back("i" + std::to_string(j * 100 + p));
    members.push_back(ex);
    ranked.push_back({ex.user, 1.0 - 0.1 * j});
  }
  Rng rng(1);
  std::vector<prompts::AnyDemonstration> demos = {demo::aggregate_members(members, ranked, 50, 20, catalog, rng)};
  corpus::EvalInstance test{"t", {}, {}, "i450"};
  for (int p = 0; p < 50; ++p) test.history.push_back("i" + std::to_string(300 + p));
  for (int c = 0; c < 20; ++c) test.candidates.push_back("i" + std::to_string(450 + c));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        prompts::assemble_prompt(demos, test, prompts::InstructionVariant::kA, ++seed, catalog, reg));
  }
}
BENCHMARK(BM_AssemblePrompt);

BENCHMARK_MAIN();
