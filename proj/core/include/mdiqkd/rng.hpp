#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mdiqkd {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent child seed for a named stream, so adding a stream never
// perturbs the others.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                    std::uint64_t index = 0) {
  return mix64(mix64(master ^ hash_tag(tag)) + index);
}

// Counter-based uniform in [0, 1) with 53 bits of precision.
constexpr double hash_uniform(std::uint64_t seed, std::uint64_t counter,
                              std::uint64_t lane = 0) {
  const std::uint64_t h = mix64(mix64(seed + lane * 0xd1b54a32d192ed03ULL) ^ counter);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace mdiqkd
