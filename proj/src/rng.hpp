#pragma once

// Portable randomness. std::mt19937_64 is bit-specified by the standard but
// the std distributions are not, so bounded integers and unit doubles are
// derived here to keep golden files identical across standard libraries.

#include <cstdint>
#include <random>
#include <string_view>

namespace thinkstop::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, 64 bit.
inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Child seed for a named subsystem, so one top-level seed feeds every consumer
// without them sharing a generator.
inline std::uint64_t derive(std::uint64_t seed, std::string_view purpose) {
  return splitmix64(seed ^ splitmix64(hash_string(purpose)));
}

inline std::uint64_t derive(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
  return splitmix64(derive(seed, purpose) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Uniform in [0, 1) with 53 random bits.
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

using Engine = std::mt19937_64;

inline double uniform01(Engine& eng) { return to_unit(eng()); }

// Uniform in [0, bound), bound > 0. Rejection sampling, no modulo bias.
inline std::uint64_t below(Engine& eng, std::uint64_t bound) {
  const std::uint64_t limit = (~std::uint64_t{0} / bound) * bound;
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return x % bound;
}

template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Engine& eng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = static_cast<decltype(i)>(below(eng, static_cast<std::uint64_t>(i) + 1));
    std::swap(first[i], first[j]);
  }
}

}  // namespace thinkstop::rng
