#pragma once

// Seeding scheme: every random draw in the library comes from a
// std::mt19937_64 whose seed is derived from (user seed, stream id,
// counter) through SplitMix64 mixing. Streams are addressed by counter, so
// per-node or per-trial draws do not depend on iteration order.

#include <cstdint>
#include <random>

namespace graphfission {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for substream `counter` of stream `stream` under `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ counter);
}

inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return Rng(derive_seed(seed, stream, counter));
}

/// Stream identifiers used across the library.
namespace stream {
inline constexpr std::uint64_t thin_gaussian = 0x7468696e67ULL;
inline constexpr std::uint64_t thin_correlated = 0x7468696e63ULL;
inline constexpr std::uint64_t thin_poisson = 0x7468696e70ULL;
inline constexpr std::uint64_t fission = 0x6669737369ULL;
inline constexpr std::uint64_t cv_folds = 0x63766664ULL;
inline constexpr std::uint64_t trend = 0x7472656e64ULL;
inline constexpr std::uint64_t noise = 0x6e6f697365ULL;
inline constexpr std::uint64_t trial = 0x747269616cULL;
}  // namespace stream

}  // namespace graphfission
