#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace hexbandit {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for a named stream, e.g. derive_seed(base, {round, interaction}, "world").
/// Streams with different tags or indices are independent, so interactions can be
/// replayed in any order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> indices,
                                 std::string_view purpose) {
  std::uint64_t h = mix64(base ^ hash_tag(purpose));
  for (auto i : indices) h = mix64(h ^ mix64(i + 0x632be59bd9b4e019ULL));
  return h;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return p > 0.0 && uniform01(rng) < p; }

}  // namespace hexbandit
