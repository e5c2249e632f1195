#pragma once

#include <cstdint>
#include <random>

namespace rmcts {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used as a counter-based hash for per-node random streams.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t key, std::uint64_t value) {
  return mix64(key ^ mix64(value + 0x632be59bd9b4e019ULL));
}

/// Maps a 64-bit key to a double in [0, 1) using the top 53 bits.
constexpr double unit_interval(std::uint64_t key) {
  return static_cast<double>(mix64(key) >> 11) * 0x1.0p-53;
}

}  // namespace rmcts
