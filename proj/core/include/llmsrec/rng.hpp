#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace llmsrec {

// mt19937_64's output sequence is fixed by the standard; the distribution
// helpers below are hand-rolled for the same reason, so a seed reproduces the
// same samples on every standard library.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Seed for one stream of randomness: splitmix64 folded over the master
/// seed, a purpose tag and up to two identifiers (instance, repeat, ...).
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::string_view id = {}, std::uint64_t index = 0);

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

template <class T>
void shuffle(std::span<T> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

template <class T>
void shuffle(std::vector<T>& values, Rng& rng) {
  shuffle(std::span<T>(values), rng);
}

/// k distinct indices from [0, n), in sampled order (partial Fisher-Yates).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng);

}  // namespace llmsrec
