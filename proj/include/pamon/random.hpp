#pragma once

#include <cstdint>
#include <random>

namespace pamon {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream seed for (base seed, stream tag, index). Streams with
// different tags never share a generator even when base and index coincide.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index) {
  return mix64(mix64(base ^ mix64(stream)) ^ index);
}

namespace streams {
inline constexpr std::uint64_t kTissue = 0x7469737375650001ULL;
inline constexpr std::uint64_t kAcquisition = 0x6163717569720002ULL;
}  // namespace streams

}  // namespace pamon
