#pragma once

// Stateless counter-based uniform numbers: (seed, counter, lane) -> [0, 1).

#include <cstdint>

namespace mhecert {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter, std::uint64_t lane) {
  return splitmix64(splitmix64(splitmix64(seed) ^ counter) ^ (lane * 0xd1b54a32d192ed03ULL));
}

/// 53-bit uniform in [0, 1).
inline constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter, std::uint64_t lane) {
  return static_cast<double>(counter_hash(seed, counter, lane) >> 11) * 0x1.0p-53;
}

}  // namespace mhecert
