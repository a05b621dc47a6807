#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fader {

// splitmix64; used to derive independent stream seeds from (seed, tag) pairs
// so that e.g. epoch shuffling and weight init never share a stream.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) { return mix64(mix64(seed) ^ mix64(stream)); }

inline std::mt19937_64 make_rng(uint64_t seed, uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(seed, stream));
}

// FNV-1a over bytes; used for content-addressed run names.
inline uint64_t fnv1a(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sampling helpers below avoid std::*_distribution, whose output is
// implementation-defined; all as draws here depend only on the engine stream.

inline double rand_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;  // [0,1)
}

inline double rand_uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(g);
}

inline int64_t rand_index(std::mt19937_64& g, int64_t n) {
  return static_cast<int64_t>(g() % static_cast<uint64_t>(n));
}

inline double rand_normal(std::mt19937_64& g) {
  // Box-Muller, one value per call (the sibling value is discarded).
  double u1 = 0.0;
  do {
    u1 = rand_unit(g);
  } while (u1 <= 1e-300);
  const double u2 = rand_unit(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline std::vector<int64_t> shuffled_indices(int64_t n, std::mt19937_64& g) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = rand_index(g, i + 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

}  // namespace fader
