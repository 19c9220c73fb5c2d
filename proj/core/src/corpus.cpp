#include "llmsrec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <regex>
#include <sstream>

namespace llmsrec::corpus {

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

Catalog::Catalog(std::vector<Item> items) : items_(std::move(items)) {
  std::sort(items_.begin(), items_.end(),
            [](const Item& a, const Item& b) { return a.id < b.id; });
  index_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].title.empty()) {
      throw CorpusError("item " + items_[i].id + " has an empty title");
    }
    if (!index_.emplace(items_[i].id, i).second) {
      throw CorpusError("duplicate item id in catalog: " + items_[i].id);
    }
  }
}

const Item& Catalog::at(const ItemId& id) const { return items_[position(id)]; }

std::size_t Catalog::position(const ItemId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw CorpusError("unknown item id: " + id);
  return it->second;
}

std::vector<std::string> Catalog::titles(std::span<const ItemId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(title(id));
  return out;
}

Catalog Catalog::subset(const std::unordered_set<ItemId>& keep) const {
  std::vector<Item> kept;
  kept.reserve(keep.size());
  for (const auto& item : items_) {
    if (keep.count(item.id)) kept.push_back(item);
  }
  return Catalog(std::move(kept));
}

std::size_t InteractionLog::n_interactions() const {
  std::size_t n = 0;
  for (const auto& [user, seq] : users) n += seq.size();
  return n;
}

Sequence InteractionLog::sequence(const UserId& user) const {
  auto it = users.find(user);
  if (it == users.end()) throw CorpusError("unknown user: " + user);
  Sequence out;
  out.reserve(it->second.size());
  for (const auto& inter : it->second) out.push_back(inter.item);
  return out;
}

DatasetFormat parse_format(const std::string& name) {
  if (name == "movielens-1m" || name == "ml-1m") return DatasetFormat::kMovieLens1M;
  if (name == "generic-tsv" || name == "tsv") return DatasetFormat::kGenericTsv;
  throw CorpusError("unknown dataset format: " + name);
}

std::string format_name(DatasetFormat format) {
  return format == DatasetFormat::kMovieLens1M ? "movielens-1m" : "generic-tsv";
}

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

namespace {

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      len = 4;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

bool parse_int64(std::string_view text, std::int64_t& out) {
  text = trim(text);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

[[noreturn]] void malformed(std::string_view what, std::size_t line_no,
                            std::string_view line) {
  std::ostringstream msg;
  msg << "malformed " << what << " line " << line_no << ": '" << line << "'";
  throw CorpusError(msg.str());
}

struct RawRecord {
  UserId user;
  ItemId item;
  std::int64_t timestamp;
};

std::vector<Item> read_items(DatasetFormat format, std::istream& in, bool clean) {
  std::vector<Item> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (format == DatasetFormat::kMovieLens1M) {
      auto fields = split(view, "::");
      if (fields.size() < 3 || trim(fields[0]).empty()) malformed("movies", line_no, view);
      // Genres are the last field; anything between is the title.
      std::string title(fields[1]);
      for (std::size_t i = 2; i + 1 < fields.size(); ++i) {
        title += "::";
        title += fields[i];
      }
      title = to_utf8(title);
      if (clean) title = clean_movielens_title(title);
      if (title.empty()) malformed("movies", line_no, view);
      items.push_back({std::string(trim(fields[0])), std::move(title)});
    } else {
      auto tab = view.find('\t');
      if (tab == std::string_view::npos) malformed("item", line_no, view);
      auto id = trim(view.substr(0, tab));
      auto title = trim(view.substr(tab + 1));
      if (id.empty() || title.empty()) malformed("item", line_no, view);
      items.push_back({std::string(id), to_utf8(title)});
    }
  }
  return items;
}

std::vector<RawRecord> read_records(DatasetFormat format, std::istream& in) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    std::vector<std::string_view> fields = format == DatasetFormat::kMovieLens1M
                                               ? split(view, "::")
                                               : split(view, "\t");
    const std::size_t expected = format == DatasetFormat::kMovieLens1M ? 4 : 3;
    if (fields.size() != expected) malformed("interaction", line_no, view);
    RawRecord rec;
    rec.user = std::string(trim(fields[0]));
    rec.item = std::string(trim(fields[1]));
    if (rec.user.empty() || rec.item.empty() ||
        !parse_int64(fields[expected - 1], rec.timestamp)) {
      malformed("interaction", line_no, view);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::string to_utf8(std::string_view bytes) {
  if (valid_utf8(bytes)) return std::string(bytes);
  std::string out;
  out.reserve(bytes.size() + bytes.size() / 4);
  for (char ch : bytes) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) {
      out.push_back(ch);
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::string clean_movielens_title(std::string_view raw) {
  static const std::regex kYear(R"(\s*\(\d{4}\)\s*$)");
  static const std::regex kArticle(R"(^(.*), (The|A|An)$)");
  std::string title = std::regex_replace(std::string(trim(raw)), kYear, "");
  std::smatch m;
  if (std::regex_match(title, m, kArticle)) {
    title = m[2].str() + " " + m[1].str();
  }
  return title;
}

// ---------------------------------------------------------------------------
// Loading and filtering
// ---------------------------------------------------------------------------

InteractionLog load_interactions(DatasetFormat format, std::istream& interactions,
                                 std::istream& items, bool clean_titles) {
  InteractionLog log;
  log.catalog = Catalog(read_items(format, items, clean_titles));

  std::vector<RawRecord> records = read_records(format, interactions);
  if (records.empty()) throw CorpusError("no interactions");
  log.raw_count = records.size();

  std::vector<ItemId> unknown;
  std::unordered_set<ItemId> seen_unknown;
  for (const auto& rec : records) {
    if (!log.catalog.contains(rec.item) && seen_unknown.insert(rec.item).second) {
      unknown.push_back(rec.item);
    }
  }
  if (!unknown.empty()) {
    std::ostringstream msg;
    msg << "interactions reference " << unknown.size() << " unknown item id(s):";
    for (std::size_t i = 0; i < unknown.size() && i < 20; ++i) msg << ' ' << unknown[i];
    if (unknown.size() > 20) msg << " ...";
    throw CorpusError(msg.str());
  }

  for (auto& rec : records) {
    log.users[rec.user].push_back({std::move(rec.item), rec.timestamp});
  }
  // stable_sort keeps file order for equal timestamps.
  for (auto& [user, seq] : log.users) {
    std::stable_sort(seq.begin(), seq.end(), [](const Interaction& a, const Interaction& b) {
      return a.timestamp < b.timestamp;
    });
  }
  return log;
}

InteractionLog load_interactions(const DatasetSource& source) {
  std::ifstream interactions(source.interactions, std::ios::binary);
  if (!interactions) {
    throw CorpusError("cannot open interactions file: " + source.interactions.string());
  }
  std::ifstream items(source.items, std::ios::binary);
  if (!items) throw CorpusError("cannot open items file: " + source.items.string());
  return load_interactions(source.format, interactions, items, source.clean_titles);
}

InteractionLog filter_log(const InteractionLog& log, int min_count) {
  if (min_count < 1) throw CorpusError("min_count must be >= 1");
  const auto threshold = static_cast<std::size_t>(min_count);

  std::map<UserId, std::vector<Interaction>> users;
  for (const auto& [user, seq] : log.users) {
    std::unordered_set<ItemId> seen;
    std::vector<Interaction> kept;
    kept.reserve(seq.size());
    for (const auto& inter : seq) {
      if (seen.insert(inter.item).second) kept.push_back(inter);
    }
    users.emplace(user, std::move(kept));
  }

  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<ItemId, std::size_t> item_counts;
    for (const auto& [user, seq] : users) {
      for (const auto& inter : seq) ++item_counts[inter.item];
    }
    for (auto it = users.begin(); it != users.end();) {
      auto& seq = it->second;
      const std::size_t before = seq.size();
      std::erase_if(seq, [&](const Interaction& inter) {
        return item_counts[inter.item] < threshold;
      });
      if (seq.size() != before) changed = true;
      if (seq.size() < threshold) {
        it = users.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }

  if (users.empty()) throw CorpusError("filtering removed all data");

  std::unordered_set<ItemId> referenced;
  for (const auto& [user, seq] : users) {
    for (const auto& inter : seq) referenced.insert(inter.item);
  }
  InteractionLog out;
  out.users = std::move(users);
  out.catalog = log.catalog.subset(referenced);
  out.raw_count = log.raw_count;
  return out;
}

// ---------------------------------------------------------------------------
// Splitting and sampling
// ---------------------------------------------------------------------------

Split leave_one_out_split(const InteractionLog& log) {
  Split split;
  for (const auto& [user, seq] : log.users) {
    if (seq.size() < 3) {
      ++split.skipped;
      continue;
    }
    Sequence items;
    items.reserve(seq.size());
    for (const auto& inter : seq) items.push_back(inter.item);
    const std::size_t n = items.size();
    split.test.push_back({user, Sequence(items.begin(), items.end() - 1), items[n - 1]});
    split.train_pool.push_back({user, Sequence(items.begin(), items.end() - 2), items[n - 2]});
  }
  return split;
}

std::vector<ItemId> build_candidate_set(const ItemId& truth, const Catalog& pool, int m,
                                        const std::unordered_set<ItemId>& exclude,
                                        Rng& rng) {
  if (m < 2) throw CorpusError("candidate set size must be >= 2");
  std::vector<std::size_t> eligible;
  eligible.reserve(pool.size());
  const auto items = pool.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id != truth && !exclude.count(items[i].id)) eligible.push_back(i);
  }
  const auto fillers = static_cast<std::size_t>(m - 1);
  if (eligible.size() < fillers) {
    throw CorpusError("candidate pool too small: need " + std::to_string(fillers) +
                      " non-truth items, have " + std::to_string(eligible.size()) +
                      " (short by " + std::to_string(fillers - eligible.size()) + ")");
  }
  std::vector<ItemId> out;
  out.reserve(static_cast<std::size_t>(m));
  for (std::size_t idx : sample_indices(eligible.size(), fillers, rng)) {
    out.push_back(items[eligible[idx]].id);
  }
  const std::size_t pos = uniform_index(rng, static_cast<std::size_t>(m));
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), truth);
  return out;
}

EvalInstance make_eval_instance(UserExample example, std::vector<ItemId> candidates) {
  if (std::count(candidates.begin(), candidates.end(), example.truth) != 1) {
    throw CorpusError("candidates for user " + example.user +
                      " must contain the truth exactly once");
  }
  std::unordered_set<ItemId> distinct(candidates.begin(), candidates.end());
  if (distinct.size() != candidates.size()) {
    throw CorpusError("duplicate candidates for user " + example.user);
  }
  if (std::find(example.history.begin(), example.history.end(), example.truth) !=
      example.history.end()) {
    throw CorpusError("truth appears in history of user " + example.user);
  }
  return EvalInstance{std::move(example.user), std::move(example.history),
                      std::move(candidates), std::move(example.truth)};
}

DatasetStats dataset_stats(const InteractionLog& log) {
  DatasetStats stats;
  std::unordered_set<ItemId> items;
  for (const auto& [user, seq] : log.users) {
    if (seq.empty()) continue;
    ++stats.n_users;
    stats.n_interactions += seq.size();
    for (const auto& inter : seq) items.insert(inter.item);
  }
  if (stats.n_users == 0) throw CorpusError("dataset_stats: empty log");
  stats.n_items = items.size();
  stats.avg_items_per_user =
      static_cast<double>(stats.n_interactions) / static_cast<double>(stats.n_users);
  stats.avg_users_per_item =
      static_cast<double>(stats.n_interactions) / static_cast<double>(stats.n_items);
  return stats;
}

}  // namespace llmsrec::corpus
