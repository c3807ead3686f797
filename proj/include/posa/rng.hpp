#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace posa {

/// SplitMix64 finaliser. Used for seed derivation only.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for replicate `replicate` of design `design_id` under `base_seed`.
/// Independent of scheduling, so parallel and serial runs agree.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view design_id,
                                    std::uint64_t replicate) {
  return mix64(mix64(base_seed ^ fnv1a(design_id)) + replicate);
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits; portable across
/// standard libraries, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection; portable across libraries.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % bound));
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

}  // namespace posa
