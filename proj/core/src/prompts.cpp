#include "llmsrec/prompts.hpp"

#include <cctype>
#include <stdexcept>

namespace llmsrec::prompts {

InstructionVariant parse_variant(const std::string& name) {
  if (name == "A" || name == "a") return InstructionVariant::kA;
  if (name == "B" || name == "b") return InstructionVariant::kB;
  if (name == "C" || name == "c") return InstructionVariant::kC;
  if (name == "D" || name == "d") return InstructionVariant::kD;
  throw std::invalid_argument("unknown instruction variant: " + name);
}

std::string variant_name(InstructionVariant variant) {
  switch (variant) {
    case InstructionVariant::kA: return "A";
    case InstructionVariant::kB: return "B";
    case InstructionVariant::kC: return "C";
    case InstructionVariant::kD: return "D";
  }
  return "?";
}

namespace {

std::string python_repr(std::string_view s) {
  const bool has_single = s.find('\'') != std::string_view::npos;
  const bool has_double = s.find('"') != std::string_view::npos;
  const char quote = (has_single && !has_double) ? '"' : '\'';
  std::string out(1, quote);
  for (char c : s) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == quote) {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  out += quote;
  return out;
}

std::string_view strip_index_prefix(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i + 1 < s.size() && s[i] == '.' && s[i + 1] == ' ') return s.substr(i + 2);
  return s;
}

const std::string& instruction_template(InstructionVariant variant,
                                        const TemplateRegistry& registry) {
  return registry.get("instruction_" + variant_name(variant));
}

template <class Ids>
std::vector<std::string> recent_titles(const Ids& ids, const corpus::Catalog& catalog,
                                       std::size_t max_history) {
  const std::size_t start = ids.size() > max_history ? ids.size() - max_history : 0;
  std::vector<std::string> out;
  out.reserve(ids.size() - start);
  for (std::size_t i = start; i < ids.size(); ++i) out.push_back(catalog.title(ids[i]));
  return out;
}

std::string numbered(std::span<const std::string> titles) {
  std::string out;
  for (std::size_t i = 0; i < titles.size(); ++i) {
    if (i > 0) out += '\n';
    out += std::to_string(i + 1) + ". " + titles[i];
  }
  return out;
}

std::string render_ranked(std::span<const std::string> history, std::span<const std::string> cands,
                          std::span<const std::string> ranking, InstructionVariant variant,
                          const TemplateRegistry& registry) {
  return render_instruction(variant, history, cands, static_cast<int>(cands.size()), registry) +
         "\n" + registry.get("answer") + "\n" + numbered(ranking);
}

std::string render_standard(const demo::Demonstration& d, InstructionVariant variant,
                            const corpus::Catalog& catalog, const TemplateRegistry& registry,
                            std::size_t max_history) {
  const auto history = recent_titles(d.history, catalog, max_history);
  const auto cands = catalog.titles(d.candidates);
  const auto label = catalog.titles(d.label);
  if (d.task == demo::TaskTemplate::kRankedItems) {
    return render_ranked(history, cands, label, variant, registry);
  }

  std::string out = fill(registry.get("profile"), {{"history", render_title_list(history)}});
  const bool show_candidates = !d.candidates.empty();
  if (show_candidates) {
    out += "\n\n" + fill(registry.get("candidates"), {{"candidates", render_title_list(cands)}});
  }
  const std::string clause = show_candidates ? registry.get("candidate_clause") : std::string();
  const char* task_key = d.task == demo::TaskTemplate::kNextItem ? "task_T1" : "task_T2";
  out += "\n" + fill(registry.get(task_key), {{"candidate_clause", clause}});
  out += "\n" + registry.get("answer") + "\n";
  if (d.task == demo::TaskTemplate::kNextItem) {
    out += label.at(0);
  } else {
    out += "Positive: " + label.at(0) + "\nNegative: " + label.at(1);
  }
  return out;
}

}  // namespace

std::string render_title_list(std::span<const std::string> titles) {
  std::string out = "[";
  for (std::size_t i = 0; i < titles.size(); ++i) {
    if (i > 0) out += ", ";
    out += python_repr(std::to_string(i) + ". " + titles[i]);
  }
  out += "]";
  return out;
}

std::vector<std::string> parse_title_list(std::string_view text) {
  auto open = text.find('[');
  if (open == std::string_view::npos) throw std::invalid_argument("title list: missing '['");
  std::vector<std::string> out;
  std::size_t i = open + 1;
  while (true) {
    while (i < text.size() && (text[i] == ' ' || text[i] == ',' || text[i] == '\n')) ++i;
    if (i >= text.size()) throw std::invalid_argument("title list: missing ']'");
    if (text[i] == ']') break;
    const char quote = text[i];
    if (quote != '\'' && quote != '"') throw std::invalid_argument("title list: expected quote");
    ++i;
    std::string item;
    bool closed = false;
    while (i < text.size()) {
      char c = text[i++];
      if (c == '\\' && i < text.size()) {
        char e = text[i++];
        item += e == 'n' ? '\n' : e;
      } else if (c == quote) {
        closed = true;
        break;
      } else {
        item += c;
      }
    }
    if (!closed) throw std::invalid_argument("title list: unterminated string");
    out.emplace_back(strip_index_prefix(item));
  }
  return out;
}

std::string ordinal(int n) {
  const int mod100 = n % 100;
  const char* suffix = "th";
  if (mod100 < 11 || mod100 > 13) {
    switch (n % 10) {
      case 1: suffix = "st"; break;
      case 2: suffix = "nd"; break;
      case 3: suffix = "rd"; break;
      default: break;
    }
  }
  return std::to_string(n) + suffix;
}

std::string render_format_list(int m, const TemplateRegistry& registry) {
  const std::string& entry = registry.get("format_entry");
  auto line = [&](int i) {
    return fill(entry, {{"index", std::to_string(i)}, {"rank", i == 1 ? "Top" : ordinal(i)}});
  };
  std::string out;
  if (m <= 3) {
    for (int i = 1; i <= m; ++i) {
      if (i > 1) out += '\n';
      out += line(i);
    }
    return out;
  }
  return line(1) + "\n" + line(2) + "\n...\n" + line(m);
}

std::string render_instruction(InstructionVariant variant,
                               std::span<const std::string> history_titles,
                               std::span<const std::string> candidate_titles, int m,
                               const TemplateRegistry& registry) {
  std::string out = fill(registry.get("profile"), {{"history", render_title_list(history_titles)}});
  out += "\n\n";
  out += fill(registry.get("candidates"), {{"candidates", render_title_list(candidate_titles)}});
  out += "\n";
  out += fill(instruction_template(variant, registry),
              {{"format_list", render_format_list(m, registry)}, {"m", std::to_string(m)}});
  return out;
}

std::string render_demonstration(const AnyDemonstration& demo, InstructionVariant variant,
                                 const corpus::Catalog& catalog, const TemplateRegistry& registry,
                                 std::size_t max_history) {
  if (const auto* standard = std::get_if<demo::Demonstration>(&demo)) {
    return render_standard(*standard, variant, catalog, registry, max_history);
  }
  const auto& agg = std::get<demo::AggregatedDemonstration>(demo);
  const auto history = recent_titles(agg.history, catalog, max_history);
  return render_ranked(history, catalog.titles(agg.candidates), catalog.titles(agg.ranking),
                       variant, registry);
}

std::size_t estimate_tokens(std::string_view text) {
  std::size_t code_points = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++code_points;
  }
  return (code_points + 3) / 4;
}

PromptBundle assemble_prompt(std::span<const AnyDemonstration> demos,
                             const corpus::EvalInstance& test, InstructionVariant variant,
                             std::uint64_t shuffle_seed, const corpus::Catalog& catalog,
                             const TemplateRegistry& registry, const PromptOptions& options) {
  PromptBundle bundle;
  auto& meta = bundle.meta;
  meta.test_candidates = test.candidates;
  Rng rng(shuffle_seed);
  shuffle(meta.test_candidates, rng);
  meta.test_candidate_titles = catalog.titles(meta.test_candidates);
  meta.truth = test.truth;
  meta.truth_title = catalog.title(test.truth);
  meta.demo_count = demos.size();

  std::string user;
  for (const auto& d : demos) {
    if (const auto* agg = std::get_if<demo::AggregatedDemonstration>(&d)) {
      meta.demo_members += agg->members.size();
    } else {
      meta.demo_members += 1;
    }
    user += render_demonstration(d, variant, catalog, registry, options.max_history);
    user += "\n\n";
  }
  if (!demos.empty()) user += registry.get("bridge") + "\n\n";
  const auto history = recent_titles(test.history, catalog, options.max_history);
  user += render_instruction(variant, history, meta.test_candidate_titles,
                             static_cast<int>(meta.test_candidates.size()), registry);

  if (options.system_message) bundle.messages.push_back({"system", registry.get("system")});
  bundle.messages.push_back({"user", std::move(user)});
  for (const auto& msg : bundle.messages) bundle.token_estimate += estimate_tokens(msg.content);
  return bundle;
}

std::vector<std::string> extract_candidate_titles(std::string_view prompt_text) {
  std::size_t end = prompt_text.size();
  while (end > 0) {
    auto line_start = prompt_text.rfind('\n', end - 1);
    line_start = line_start == std::string_view::npos ? 0 : line_start + 1;
    std::string_view line = prompt_text.substr(line_start, end - line_start);
    auto marker = line.find(": [");
    if (line.find("Candidate") != std::string_view::npos && marker != std::string_view::npos) {
      return parse_title_list(line.substr(marker + 2));
    }
    if (line_start == 0) break;
    end = line_start - 1;
  }
  throw std::invalid_argument("no candidate list found in prompt");
}

}  // namespace llmsrec::prompts
