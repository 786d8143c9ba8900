#pragma once
// Seeding helpers. Every stochastic component derives its own stream from a
// master seed so that runs are reproducible and per-item work can be
// parallelized without changing the output.

#include <cstdint>
#include <random>

namespace kern {

// SplitMix64 mixer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix_seed(master ^ mix_seed(stream ^ mix_seed(index)));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace kern
