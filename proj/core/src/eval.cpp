#include "llmsrec/eval.hpp"

#include <cctype>
#include <cmath>
#include <regex>
#include <unordered_map>

namespace llmsrec::eval {

std::string normalize_title(std::string_view title) {
  std::string out;
  out.reserve(title.size());
  bool pending_space = false;
  for (char ch : title) {
    auto c = static_cast<unsigned char>(ch);
    if (c == '\'' || c == '`') continue;
    if (c < 0x80 && (std::ispunct(c) || std::isspace(c))) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

std::string normalize_without_article(std::string_view title) {
  std::string norm = normalize_title(title);
  for (std::string_view article : {"the ", "a ", "an "}) {
    if (norm.size() > article.size() && norm.compare(0, article.size(), article) == 0) {
      return norm.substr(article.size());
    }
  }
  return norm;
}

namespace {

std::string clean_line_text(std::string text) {
  auto trim = [](std::string& s) {
    const char* ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    auto last = s.find_last_not_of(ws);
    s.erase(last == std::string::npos ? 0 : last + 1);
  };
  trim(text);
  // Markdown emphasis.
  for (std::string_view marker : {"**", "__"}) {
    if (text.size() >= 2 * marker.size() && text.compare(0, marker.size(), marker) == 0 &&
        text.compare(text.size() - marker.size(), marker.size(), marker) == 0) {
      text = text.substr(marker.size(), text.size() - 2 * marker.size());
      trim(text);
    }
  }
  const std::string suffix = "(Candidate Movie)";
  if (text.size() > suffix.size() &&
      text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0) {
    text.erase(text.size() - suffix.size());
    trim(text);
  }
  // One layer of enclosing brackets or quotes.
  if (text.size() >= 2) {
    const char a = text.front(), b = text.back();
    if ((a == '[' && b == ']') || (a == '"' && b == '"') || (a == '\'' && b == '\'')) {
      text = text.substr(1, text.size() - 2);
      trim(text);
    }
  }
  return text;
}

bool contains_words(const std::string& haystack, const std::string& needle) {
  if (needle.size() < 3) return false;
  return (" " + haystack + " ").find(" " + needle + " ") != std::string::npos;
}

struct CandidateIndex {
  std::span<const corpus::Item> items;
  std::unordered_map<std::string, std::size_t> exact;
  std::unordered_map<std::string, std::size_t> normalized;
  std::vector<std::string> stripped;

  explicit CandidateIndex(std::span<const corpus::Item> cands) : items(cands) {
    for (std::size_t i = 0; i < cands.size(); ++i) {
      exact.emplace(cands[i].title, i);
      normalized.emplace(normalize_title(cands[i].title), i);
      stripped.push_back(normalize_without_article(cands[i].title));
    }
  }

  std::optional<std::pair<std::size_t, MatchTier>> match(const std::string& text) const {
    if (auto it = exact.find(text); it != exact.end()) {
      return std::pair{it->second, MatchTier::kExact};
    }
    if (auto it = normalized.find(normalize_title(text)); it != normalized.end()) {
      return std::pair{it->second, MatchTier::kNormalized};
    }
    const std::string line = normalize_without_article(text);
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < stripped.size(); ++i) {
      if (contains_words(line, stripped[i]) || contains_words(stripped[i], line)) {
        if (!best || stripped[i].size() > stripped[*best].size()) best = i;
      }
    }
    if (best) return std::pair{*best, MatchTier::kContainment};
    return std::nullopt;
  }
};

}  // namespace

ParsedRanking parse_ranked_list(std::string_view text, std::span<const corpus::Item> candidates) {
  static const std::regex kLine(R"(^\s*\d+[\.\)]\s*(.+)$)");
  const CandidateIndex index(candidates);
  ParsedRanking parsed;
  int candidate_lines = 0;

  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string raw(text.substr(start, end - start));
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    start = end + 1;

    std::smatch m;
    if (!std::regex_match(raw, m, kLine)) continue;
    ParsedLine line;
    line.raw = raw;
    line.text = clean_line_text(m[1].str());
    ++parsed.n_output_lines;
    const int position = static_cast<int>(parsed.n_output_lines);
    if (auto hit = index.match(line.text)) {
      const ItemId& id = candidates[hit->first].id;
      line.item = id;
      line.tier = hit->second;
      if (parsed.matched_rank.count(id)) {
        line.duplicate = true;
      } else {
        parsed.matched_rank.emplace(id, position);
        parsed.candidate_rank.emplace(id, ++candidate_lines);
      }
    }
    parsed.lines.push_back(std::move(line));
  }
  if (parsed.n_output_lines == 0) throw UnparseableResponse();
  return parsed;
}

std::optional<int> truth_rank(const ParsedRanking& parsed, const ItemId& truth, RankBasis basis) {
  const auto& ranks =
      basis == RankBasis::kEmittedLine ? parsed.matched_rank : parsed.candidate_rank;
  auto it = ranks.find(truth);
  if (it == ranks.end()) return std::nullopt;
  return it->second;
}

double ndcg_at(const ParsedRanking& parsed, const ItemId& truth, int n, RankBasis basis) {
  if (n < 1) throw std::invalid_argument("ndcg cutoff must be >= 1");
  auto rank = truth_rank(parsed, truth, basis);
  if (!rank || *rank > n) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

double cir(const ParsedRanking& parsed, CirDenominator denominator, std::size_t m) {
  const std::size_t denom =
      denominator == CirDenominator::kEmittedLines ? parsed.n_output_lines : m;
  if (denom == 0) return 0.0;
  return static_cast<double>(parsed.matched_lines()) / static_cast<double>(denom);
}

MetricSet score(const ParsedRanking& parsed, const ItemId& truth, std::size_t m,
                const ScoringOptions& options) {
  MetricSet set;
  for (int n : options.cutoffs) set.ndcg[n] = ndcg_at(parsed, truth, n, options.rank_basis);
  set.cir = cir(parsed, options.cir_denominator, m);
  set.truth_rank = truth_rank(parsed, truth, options.rank_basis);
  return set;
}

MetricSet total_miss(const ScoringOptions& options) {
  MetricSet set;
  for (int n : options.cutoffs) set.ndcg[n] = 0.0;
  return set;
}

MetricSet average(std::span<const MetricSet> sets) {
  MetricSet out;
  if (sets.empty()) return out;
  for (const auto& s : sets) {
    for (const auto& [n, v] : s.ndcg) out.ndcg[n] += v;
    out.cir += s.cir;
  }
  const double count = static_cast<double>(sets.size());
  for (auto& [n, v] : out.ndcg) v /= count;
  out.cir /= count;
  return out;
}

RunSummary aggregate_runs(std::span<const MetricSet> per_run) {
  if (per_run.empty()) throw std::invalid_argument("aggregate_runs: no runs");
  std::map<std::string, std::vector<double>> columns;
  for (const auto& run : per_run) {
    for (const auto& [n, v] : run.ndcg) columns["ndcg@" + std::to_string(n)].push_back(v);
    columns["cir"].push_back(run.cir);
  }
  RunSummary summary;
  for (const auto& [name, values] : columns) {
    MeanStd ms;
    for (double v : values) ms.mean += v;
    ms.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - ms.mean) * (v - ms.mean);
      ms.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    summary[name] = ms;
  }
  return summary;
}

}  // namespace llmsrec::eval
