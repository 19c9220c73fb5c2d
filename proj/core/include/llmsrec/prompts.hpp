#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "llmsrec/corpus.hpp"
#include "llmsrec/demo.hpp"

namespace llmsrec::prompts {

/// A: all four components. B: no preference-alignment clause. C: no
/// watched-items clause. D: enumerated format block replaced by prose.
enum class InstructionVariant { kA, kB, kC, kD };

InstructionVariant parse_variant(const std::string& name);
std::string variant_name(InstructionVariant variant);

/// Named prompt text assets. Placeholders are written `{name}`.
///
///   system            system message
///   profile           {history}
///   candidates        {candidates}
///   instruction_A..D  {format_list}, {m}
///   format_entry      {index}, {rank}
///   task_T1, task_T2  {candidate_clause}
///   candidate_clause  appended to T1/T2 requests when candidates are shown
///   bridge            line between demonstrations and the test block
class TemplateRegistry {
 public:
  static TemplateRegistry builtin();
  /// Built-in defaults overridden by `<dir>/<name>.txt` where present. One
  /// trailing newline is stripped from each file.
  static TemplateRegistry load(const std::filesystem::path& dir);
  static std::span<const std::string_view> names();

  const std::string& get(const std::string& name) const;
  void set(const std::string& name, std::string text);
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Writes every entry as `<dir>/<name>.txt`.
  void save(const std::filesystem::path& dir) const;

 private:
  std::map<std::string, std::string> entries_;
};

/// Replaces `{key}` occurrences; unknown placeholders are left untouched.
std::string fill(std::string_view text, const std::map<std::string, std::string>& values);

/// Python-style list literal of indexed titles: ['0. Jaws', "1. A Bug's Life"].
std::string render_title_list(std::span<const std::string> titles);
/// Inverse of render_title_list (index prefixes removed).
std::vector<std::string> parse_title_list(std::string_view text);

std::string ordinal(int n);
std::string render_format_list(int m, const TemplateRegistry& registry);

std::string render_instruction(InstructionVariant variant,
                               std::span<const std::string> history_titles,
                               std::span<const std::string> candidate_titles, int m,
                               const TemplateRegistry& registry);

using AnyDemonstration = std::variant<demo::Demonstration, demo::AggregatedDemonstration>;

/// Instruction block followed by "Answer:" and the label lines. Histories
/// longer than `max_history` are cut to their most recent items.
std::string render_demonstration(const AnyDemonstration& demo, InstructionVariant variant,
                                 const corpus::Catalog& catalog, const TemplateRegistry& registry,
                                 std::size_t max_history = 50);

struct Message {
  std::string role;
  std::string content;

  bool operator==(const Message&) const = default;
};

/// Side information for test doubles and scoring; never rendered.
struct PromptMeta {
  std::vector<corpus::ItemId> test_candidates;
  std::vector<std::string> test_candidate_titles;
  corpus::ItemId truth;
  std::string truth_title;
  std::size_t demo_count = 0;
  std::size_t demo_members = 0;
};

struct PromptBundle {
  std::vector<Message> messages;
  std::size_t token_estimate = 0;
  PromptMeta meta;

  const std::string& user_text() const { return messages.back().content; }
};

struct PromptOptions {
  std::size_t max_history = 50;
  bool system_message = true;
};

/// ceil(code points / 4)
std::size_t estimate_tokens(std::string_view text);

/// Demonstrations in the given order, the bridge line, then the test
/// instruction with candidates shuffled by `shuffle_seed`. System framing goes
/// in its own message; everything else shares one user message.
PromptBundle assemble_prompt(std::span<const AnyDemonstration> demos,
                             const corpus::EvalInstance& test, InstructionVariant variant,
                             std::uint64_t shuffle_seed, const corpus::Catalog& catalog,
                             const TemplateRegistry& registry, const PromptOptions& options = {});

/// Titles from the last "Candidate ...: [...]" list in a rendered prompt.
std::vector<std::string> extract_candidate_titles(std::string_view prompt_text);

}  // namespace llmsrec::prompts
