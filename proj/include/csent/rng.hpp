#pragma once

#include "csent/real.hpp"
#include <cstdint>
#include <random>

namespace csent::inline CSENT_ABI {

/// splitmix64 finaliser.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a stream id.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Counter-based uniform draw in [0, 1) with 24 bits of resolution.
constexpr double hash_uniform(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(mix_seed(seed, index) >> 40) * 0x1.0p-24;
}

using Rng = std::mt19937_64;

}  // namespace csent
