#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dmavae {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a stream key from a master seed and a tuple of counters, so that
// independent jobs (epochs, batches, records, repetitions) never share a
// stream and the result does not depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(derive_seed(seed, keys));
}

}  // namespace dmavae
