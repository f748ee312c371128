#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace cotlab {

// All randomness goes through mt19937_64, whose output sequence is fixed by
// the standard. The std::*_distribution adaptors are implementation-defined,
// so the helpers below do their own conversions to keep byte-identical
// outputs across standard libraries.
using Rng = std::mt19937_64;

/// Derives an independent seed for a named component from a user seed.
/// seed' = splitmix64(seed ^ fnv1a64(label)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Same as derive_seed, with an extra integer salt (trial index, sample id).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t salt);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

inline Rng make_rng(std::uint64_t seed, std::string_view label) {
  return Rng{derive_seed(seed, label)};
}

/// Uniform double in [0, 1) from the top 53 bits.
double uniform01(Rng& rng);

/// Uniform double in (lo, hi); never returns an endpoint.
double uniform_open(Rng& rng, double lo, double hi);

/// Unbiased integer in [0, bound) by rejection.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// +1 or -1 with equal probability.
int rademacher(Rng& rng);

bool bernoulli(Rng& rng, double p);

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double lo, double hi);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

/// k distinct values from [0, n) in selection order (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace cotlab
