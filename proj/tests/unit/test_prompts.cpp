#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "llmsrec/prompts.hpp"
#include "support/oracles.hpp"

using namespace llmsrec;
using namespace llmsrec::prompts;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

corpus::EvalInstance test_instance(int m) {
  corpus::EvalInstance t;
  t.user = "t";
  for (int i = 0; i < 10; ++i) t.history.push_back("i" + std::to_string(i));
  for (int i = 0; i < m; ++i) t.candidates.push_back("i" + std::to_string(50 + i));
  t.truth = "i50";
  return t;
}

}  // namespace

TEST(TitleList, PythonRepr) {
  std::vector<std::string> titles = {"Jaws", "A Bug's Life", "Say \"Hi\"", "Both ' and \""};
  const auto text = render_title_list(titles);
  EXPECT_EQ(text.substr(0, 22), "['0. Jaws', \"1. A Bug'");
  EXPECT_EQ(parse_title_list(text), titles);
}

TEST(Ordinal, Suffixes) {
  EXPECT_EQ(ordinal(1), "1st");
  EXPECT_EQ(ordinal(2), "2nd");
  EXPECT_EQ(ordinal(3), "3rd");
  EXPECT_EQ(ordinal(11), "11th");
  EXPECT_EQ(ordinal(12), "12th");
  EXPECT_EQ(ordinal(20), "20th");
  EXPECT_EQ(ordinal(22), "22nd");
}

TEST(Instruction, FormatBlockEnd) {
  auto reg = TemplateRegistry::builtin();
  std::vector<std::string> h = {"Jaws"}, c = {"Brazil", "Heat"};
  auto text = render_instruction(InstructionVariant::kA, h, c, 20, reg);
  const std::string tail = "20. [20th Recommendation (Candidate Movie)]";
  EXPECT_EQ(text.substr(text.size() - tail.size()), tail);
  EXPECT_NE(text.find("1. [Top Recommendation (Candidate Movie)]"), std::string::npos);
  EXPECT_NE(text.find("2. [2nd Recommendation (Candidate Movie)]\n...\n20."), std::string::npos);
}

TEST(Instruction, VariantComponents) {
  auto reg = TemplateRegistry::builtin();
  std::vector<std::string> h = {"Jaws"}, c = {"Brazil"};
  const auto a = render_instruction(InstructionVariant::kA, h, c, 20, reg);
  const auto b = render_instruction(InstructionVariant::kB, h, c, 20, reg);
  const auto cc = render_instruction(InstructionVariant::kC, h, c, 20, reg);
  const auto d = render_instruction(InstructionVariant::kD, h, c, 20, reg);
  const std::string align = "align closely with the user's preferences";
  EXPECT_NE(a.find(align), std::string::npos);
  EXPECT_EQ(b.find(align), std::string::npos);
  EXPECT_EQ(cc.find("You DO NOT generate"), std::string::npos);
  EXPECT_NE(a.find("You DO NOT generate"), std::string::npos);

  // A and D agree up to the result-format region.
  const std::string marker = "Present your response";
  const auto pa = a.find(marker), pd = d.find(marker);
  ASSERT_NE(pa, std::string::npos);
  EXPECT_EQ(a.substr(0, pa), d.substr(0, pd));
  EXPECT_NE(a.substr(pa), d.substr(pd));
}

TEST(RenderDemo, T1AnswerIsSingleLine) {
  auto catalog = fixture::catalog(40);
  demo::Demonstration d{demo::TaskTemplate::kNextItem, "u", {"i1", "i2"}, {}, {"i3"}};
  auto text = render_demonstration(d, InstructionVariant::kA, catalog, TemplateRegistry::builtin());
  auto ls = lines_of(text);
  EXPECT_EQ(ls[ls.size() - 2], "Answer:");
  EXPECT_EQ(ls.back(), "Movie 3");
}

TEST(RenderDemo, T3AnswerHasMLines) {
  auto catalog = fixture::catalog(40);
  Rng rng(3);
  auto d = demo::build_standard_demo({"u", {"i1", "i2"}, "i3"}, demo::TaskTemplate::kRankedItems,
                                     20, catalog, rng);
  auto text = render_demonstration(d, InstructionVariant::kA, catalog, TemplateRegistry::builtin());
  auto answer = text.substr(text.find("\nAnswer:\n") + 9);
  auto ls = lines_of(answer);
  ASSERT_EQ(ls.size(), 20u);
  EXPECT_EQ(ls[0], "1. Movie 3");
}

TEST(RenderDemo, AggregatedAnswerListsTruthsFirst) {
  auto catalog = fixture::catalog(60);
  std::vector<corpus::UserExample> members = {
      {"a", {"i1", "i2"}, "i10"}, {"b", {"i3"}, "i11"}, {"c", {"i4", "i5"}, "i12"}};
  retrieval::RankedDemonstrations ranked = {{"a", 3}, {"b", 2}, {"c", 1}};
  Rng rng(8);
  auto agg = demo::aggregate_members(members, ranked, 50, 20, catalog, rng);
  auto text = render_demonstration(agg, InstructionVariant::kA, catalog, TemplateRegistry::builtin());
  auto ls = lines_of(text.substr(text.find("\nAnswer:\n") + 9));
  ASSERT_EQ(ls.size(), 20u);
  EXPECT_EQ(ls[0], "1. Movie 10");
  EXPECT_EQ(ls[1], "2. Movie 11");
  EXPECT_EQ(ls[2], "3. Movie 12");
}

TEST(Assemble, ZeroShotIsTestInstructionOnly) {
  auto catalog = fixture::catalog(80);
  auto reg = TemplateRegistry::builtin();
  auto t = test_instance(20);
  auto bundle = assemble_prompt({}, t, InstructionVariant::kA, 1, catalog, reg);
  ASSERT_EQ(bundle.messages.size(), 2u);
  EXPECT_EQ(bundle.messages[0].role, "system");
  const auto& user = bundle.user_text();
  EXPECT_EQ(user.rfind("The User's Movie Profile:", 0), 0u);
  EXPECT_EQ(user.find("Learn from"), std::string::npos);
  EXPECT_EQ(user.find("Answer:"), std::string::npos);
  EXPECT_EQ(bundle.token_estimate,
            estimate_tokens(bundle.messages[0].content) + estimate_tokens(user));
}

TEST(Assemble, BridgePrecedesTestBlock) {
  auto catalog = fixture::catalog(80);
  auto reg = TemplateRegistry::builtin();
  Rng rng(2);
  auto d = demo::build_standard_demo({"u", {"i1", "i2"}, "i3"}, demo::TaskTemplate::kRankedItems,
                                     20, catalog, rng);
  std::vector<AnyDemonstration> demos = {d};
  auto bundle = assemble_prompt(demos, test_instance(20), InstructionVariant::kA, 1, catalog, reg);
  const auto& user = bundle.user_text();
  const auto bridge = user.find(reg.get("bridge"));
  ASSERT_NE(bridge, std::string::npos);
  EXPECT_LT(user.find("Answer:"), bridge);
  EXPECT_NE(user.find("The User's Movie Profile:", bridge), std::string::npos);
  EXPECT_EQ(bundle.meta.demo_count, 1u);
}

TEST(Assemble, ShuffleSeedOnlyMovesTestCandidates) {
  auto catalog = fixture::catalog(80);
  auto reg = TemplateRegistry::builtin();
  auto t = test_instance(20);
  auto a = assemble_prompt({}, t, InstructionVariant::kA, 1, catalog, reg);
  auto a2 = assemble_prompt({}, t, InstructionVariant::kA, 1, catalog, reg);
  auto b = assemble_prompt({}, t, InstructionVariant::kA, 2, catalog, reg);
  EXPECT_EQ(a.messages, a2.messages);
  auto la = lines_of(a.user_text()), lb = lines_of(b.user_text());
  ASSERT_EQ(la.size(), lb.size());
  int differing = 0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i] != lb[i]) {
      ++differing;
      EXPECT_NE(la[i].find("Candidate Movies"), std::string::npos);
    }
  }
  EXPECT_EQ(differing, 1);
  auto ta = extract_candidate_titles(a.user_text());
  auto tb = extract_candidate_titles(b.user_text());
  EXPECT_EQ(std::set<std::string>(ta.begin(), ta.end()), std::set<std::string>(tb.begin(), tb.end()));
  EXPECT_EQ(ta, a.meta.test_candidate_titles);
}

TEST(Assemble, LongHistoryTruncated) {
  auto catalog = fixture::catalog(200);
  auto t = test_instance(20);
  t.history.clear();
  for (int i = 100; i < 180; ++i) t.history.push_back("i" + std::to_string(i));
  auto bundle = assemble_prompt({}, t, InstructionVariant::kA, 1, catalog,
                                TemplateRegistry::builtin());
  const auto& user = bundle.user_text();
  EXPECT_EQ(user.find("'0. Movie 100'"), std::string::npos);
  EXPECT_NE(user.find("'0. Movie 130'"), std::string::npos);
  EXPECT_NE(user.find("'49. Movie 179'"), std::string::npos);
}

TEST(Templates, FillLeavesUnknownPlaceholders) {
  EXPECT_EQ(fill("{a} and {b}", {{"a", "x"}}), "x and {b}");
}

TEST(Templates, AssetFilesMatchBuiltins) {
  const std::filesystem::path dir = LLMSREC_TEMPLATE_DIR;
  auto builtin = TemplateRegistry::builtin();
  for (const auto& [name, text] : builtin.entries()) {
    std::ifstream in(dir / (name + ".txt"), std::ios::binary);
    ASSERT_TRUE(in) << name;
    std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(file, text + "\n") << name;
  }
  EXPECT_EQ(TemplateRegistry::load(dir).entries(), builtin.entries());
}

TEST(Templates, OverrideFromDirectory) {
  auto dir = std::filesystem::temp_directory_path() / "llmsrec_tests" / "tpl_override";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "bridge.txt") << "Now the real one.\n";
  auto reg = TemplateRegistry::load(dir);
  EXPECT_EQ(reg.get("bridge"), "Now the real one.");
  EXPECT_EQ(reg.get("system"), TemplateRegistry::builtin().get("system"));
}
