#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "llmsrec/rng.hpp"

namespace llmsrec::corpus {

using ItemId = std::string;
using UserId = std::string;
using Sequence = std::vector<ItemId>;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Item {
  ItemId id;
  std::string title;

  bool operator==(const Item&) const = default;
};

/// Item universe, kept sorted by id so iteration order is deterministic.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Item> items);

  bool contains(const ItemId& id) const { return index_.count(id) != 0; }
  const Item& at(const ItemId& id) const;
  const std::string& title(const ItemId& id) const { return at(id).title; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::span<const Item> items() const { return items_; }
  /// Position of `id` in items(); throws when absent.
  std::size_t position(const ItemId& id) const;

  std::vector<std::string> titles(std::span<const ItemId> ids) const;

  /// Catalog restricted to the given ids.
  Catalog subset(const std::unordered_set<ItemId>& keep) const;

  bool operator==(const Catalog& other) const { return items_ == other.items_; }

 private:
  std::vector<Item> items_;
  std::unordered_map<ItemId, std::size_t> index_;
};

struct Interaction {
  ItemId item;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

struct InteractionLog {
  std::map<UserId, std::vector<Interaction>> users;
  Catalog catalog;
  /// Interaction records read from the source before any filtering.
  std::size_t raw_count = 0;

  std::size_t n_interactions() const;
  Sequence sequence(const UserId& user) const;

  bool operator==(const InteractionLog& other) const {
    return users == other.users && catalog == other.catalog;
  }
};

enum class DatasetFormat { kMovieLens1M, kGenericTsv };

DatasetFormat parse_format(const std::string& name);
std::string format_name(DatasetFormat format);

struct DatasetSource {
  DatasetFormat format = DatasetFormat::kGenericTsv;
  std::filesystem::path interactions;
  std::filesystem::path items;
  /// MovieLens only: drop the "(1995)" year suffix and move a trailing
  /// ", The" style article to the front.
  bool clean_titles = true;
};

InteractionLog load_interactions(const DatasetSource& source);
InteractionLog load_interactions(DatasetFormat format, std::istream& interactions,
                                 std::istream& items, bool clean_titles = true);

/// Deduplicates (user, item) keeping the earliest interaction, then drops
/// users and items with fewer than `min_count` interactions until nothing
/// changes. The catalog is pruned to items that still occur.
InteractionLog filter_log(const InteractionLog& log, int min_count);

/// One user's (history, next item) pair.
struct UserExample {
  UserId user;
  Sequence history;
  ItemId truth;

  bool operator==(const UserExample&) const = default;
};

struct Split {
  std::vector<UserExample> test;
  /// Same users shifted one step back: truth is the second-to-last item.
  std::vector<UserExample> train_pool;
  std::size_t skipped = 0;
};

Split leave_one_out_split(const InteractionLog& log);

/// M-1 distinct random items from `pool` (never `truth`, never in `exclude`)
/// with `truth` inserted at a uniformly random position.
std::vector<ItemId> build_candidate_set(const ItemId& truth, const Catalog& pool,
                                        int m,
                                        const std::unordered_set<ItemId>& exclude,
                                        Rng& rng);

template <class T>
std::vector<T> sample_eval_users(std::span<const T> test, std::size_t n, Rng& rng) {
  if (n > test.size()) {
    throw CorpusError("cannot sample " + std::to_string(n) + " users from " +
                      std::to_string(test.size()));
  }
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t idx : sample_indices(test.size(), n, rng)) out.push_back(test[idx]);
  return out;
}

/// Test case presented to the recommender.
struct EvalInstance {
  UserId user;
  Sequence history;
  std::vector<ItemId> candidates;
  ItemId truth;
};

/// Validates truth ∈ candidates, truth ∉ history, distinct candidates.
EvalInstance make_eval_instance(UserExample example, std::vector<ItemId> candidates);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double avg_items_per_user = 0.0;
  double avg_users_per_item = 0.0;
};

DatasetStats dataset_stats(const InteractionLog& log);

/// Strips a trailing "(YYYY)" and rotates "Title, The" to "The Title".
std::string clean_movielens_title(std::string_view raw);

/// Returns `bytes` unchanged if it is valid UTF-8, otherwise reinterprets it
/// as Latin-1.
std::string to_utf8(std::string_view bytes);

}  // namespace llmsrec::corpus
