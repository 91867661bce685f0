#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace textgcn {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (auto p : parts) h = mix_seed(h ^ mix_seed(p));
  return h;
}

// Uniform double in [0, 1) from the top 53 bits. Independent of the
// standard library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Counter-based uniform double in [0, 1) for draw number `index` of a stream.
inline double uniform01_at(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(mix_seed(seed ^ mix_seed(index)) >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = -n % n;
  for (;;) {
    std::uint64_t r = rng();
    if (r >= limit) return r % n;
  }
}

// Fisher-Yates with uniform_below so shuffles are stable across toolchains.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    auto j = uniform_below(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace textgcn
