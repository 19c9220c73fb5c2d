#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "llmsrec/prompts.hpp"

namespace llmsrec::prompts {

namespace {

// Keep in sync with core/assets/templates/*.txt (checked by a unit test).
constexpr std::array<std::pair<std::string_view, std::string_view>, 13> kBuiltin{{
    {"system", "You are a movie recommender system."},
    {"profile", "The User's Movie Profile:\n- Watched Movies: {history}"},
    {"candidates", "The User's Potential Matches:\n- Candidate Movies: {candidates}"},
    {"instruction_A",
     "Based on the user's watched movies, please rank the candidate movies that align closely "
     "with the user's preferences.\n"
     "- You ONLY rank the given Candidate Movies.\n"
     "- You DO NOT generate movies from Watched Movies.\n"
     "\n"
     "Present your response in the format below:\n"
     "{format_list}"},
    {"instruction_B",
     "Based on the user's watched movies, please rank the candidate movies.\n"
     "- You ONLY rank the given Candidate Movies.\n"
     "- You DO NOT generate movies from Watched Movies.\n"
     "\n"
     "Present your response in the format below:\n"
     "{format_list}"},
    {"instruction_C",
     "Please rank the candidate movies that align closely with the user's preferences.\n"
     "- You ONLY rank the given Candidate Movies.\n"
     "\n"
     "Present your response in the format below:\n"
     "{format_list}"},
    {"instruction_D",
     "Based on the user's watched movies, please rank the candidate movies that align closely "
     "with the user's preferences.\n"
     "- You ONLY rank the given Candidate Movies.\n"
     "- You DO NOT generate movies from Watched Movies.\n"
     "\n"
     "Present your response as a numbered list of all {m} candidate movies, one title per "
     "line, ordered from the most to the least recommended."},
    {"format_entry", "{index}. [{rank} Recommendation (Candidate Movie)]"},
    {"task_T1",
     "Based on the user's watched movies, please predict the next movie the user will "
     "watch{candidate_clause}."},
    {"task_T2",
     "Based on the user's watched movies, please name one movie the user will like (Positive) "
     "and one movie the user will not like (Negative){candidate_clause}."},
    {"candidate_clause", " from the given Candidate Movies"},
    {"bridge", "Learn from the above demonstration examples to solve the following test example."},
    {"answer", "Answer:"},
}};

constexpr std::array<std::string_view, kBuiltin.size()> kNames = [] {
  std::array<std::string_view, kBuiltin.size()> names{};
  for (std::size_t i = 0; i < kBuiltin.size(); ++i) names[i] = kBuiltin[i].first;
  return names;
}();

}  // namespace

TemplateRegistry TemplateRegistry::builtin() {
  TemplateRegistry reg;
  for (const auto& [name, text] : kBuiltin) reg.entries_.emplace(name, text);
  return reg;
}

std::span<const std::string_view> TemplateRegistry::names() { return kNames; }

TemplateRegistry TemplateRegistry::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("template directory not found: " + dir.string());
  }
  TemplateRegistry reg = builtin();
  for (auto name : kNames) {
    auto path = dir / (std::string(name) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (!text.empty() && text.back() == '\n') text.pop_back();
    if (!text.empty() && text.back() == '\r') text.pop_back();
    reg.entries_[std::string(name)] = std::move(text);
  }
  return reg;
}

void TemplateRegistry::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : entries_) {
    std::ofstream out(dir / (name + ".txt"), std::ios::binary);
    out << text << '\n';
  }
}

const std::string& TemplateRegistry::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no template named " + name);
  return it->second;
}

void TemplateRegistry::set(const std::string& name, std::string text) {
  entries_[name] = std::move(text);
}

std::string fill(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

}  // namespace llmsrec::prompts
