#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace diffnaps {

using Rng = std::mt19937_64;

// Stream-assignment rule: every consumer of randomness owns a dedicated
// engine seeded with derive_seed(master, {purpose tag, index...}). Streams
// never depend on thread count or scheduling, so any worker layout reproduces
// the single-threaded result bit for bit.
namespace stream {
inline constexpr std::uint64_t kInit = 0x696e6974;          // parameter initialization
inline constexpr std::uint64_t kShuffle = 0x73687566;       // per-epoch row order
inline constexpr std::uint64_t kSample = 0x73616d70;        // per-batch weight sample
inline constexpr std::uint64_t kPatterns = 0x70617474;      // synthetic pattern draws
inline constexpr std::uint64_t kRows = 0x726f7773;          // synthetic per-row noise
inline constexpr std::uint64_t kSweep = 0x73776570;         // benchmark grid points
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

/// FNV-1a of a short string; used to turn names (e.g. a sweep axis) into stream keys.
inline std::uint64_t name_key(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Bernoulli(p); exact at p = 0 and p = 1.
inline bool bernoulli(Rng& rng, double p) noexcept { return uniform01(rng) < p; }

}  // namespace diffnaps
