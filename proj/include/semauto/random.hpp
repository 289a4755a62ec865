#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace semauto {

// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix_seed(parent ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return h;
}

// Uniform integer in [0, bound) without modulo bias.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = 0;
  do r = rng();
  while (r >= limit);
  return r % bound;
}

// First `count` elements of a partial Fisher-Yates shuffle (sampling without replacement).
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t count, std::mt19937_64& rng) {
  count = std::min(count, pool.size());
  for (std::size_t t = 0; t < count; ++t) std::swap(pool[t], pool[t + uniform_below(rng, pool.size() - t)]);
  pool.resize(count);
  return pool;
}

}  // namespace semauto
