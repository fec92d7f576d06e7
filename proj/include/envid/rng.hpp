#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace envid {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over a byte view; stable across platforms.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Child seed for (global seed, record index, stage tag). Any record can be
// regenerated from these three values alone.
constexpr std::uint64_t derive_seed(std::uint64_t global, std::uint64_t index,
                                    std::string_view stage = {}) noexcept {
  return mix64(mix64(global ^ mix64(index)) ^ fnv1a(stage));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

std::string to_hex(std::uint64_t value);

}  // namespace envid
