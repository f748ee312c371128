#include "cotlab/rng.hpp"

#include <numeric>

#include "cotlab/errors.hpp"

namespace cotlab {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  return splitmix64(seed ^ fnv1a64(label));
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t salt) {
  return splitmix64(derive_seed(seed, label) ^ splitmix64(salt + 0x632be59bd9b4e019ULL));
}

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform_open(Rng& rng, double lo, double hi) {
  for (;;) {
    const double u = uniform01(rng);
    if (u > 0.0) {
      return lo + (hi - lo) * u;
    }
  }
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  if (bound == 0) {
    throw InputError("uniform_below: bound must be positive");
  }
  const std::uint64_t limit = bound * (~std::uint64_t{0} / bound);
  for (;;) {
    const std::uint64_t r = rng();
    if (r < limit) {
      return r % bound;
    }
  }
}

int rademacher(Rng& rng) { return (rng() >> 63) != 0 ? 1 : -1; }

bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> out(n);
  for (auto& x : out) {
    x = uniform_open(rng, lo, hi);
  }
  return out;
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) {
    throw InputError("sample_without_replacement: k exceeds population");
  }
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace cotlab
