#pragma once

#include <cstdint>

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, index), so potentials are stable under window extension
// and ensembles can be sampled in any order or in parallel.

namespace nlam::rng {

inline constexpr char generator_id[] = "splitmix64-counter-v1";

inline constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ull;

// splitmix64 finalizer; bijective on 64-bit words.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += golden;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

// Signed site index -> u64 without sign-extension collisions.
inline constexpr std::uint64_t zigzag(std::int64_t j) {
  return (static_cast<std::uint64_t>(j) << 1) ^
         static_cast<std::uint64_t>(j >> 63);
}

inline constexpr std::uint64_t key2(std::uint64_t seed, std::uint64_t a) {
  return mix64(mix64(seed) ^ mix64(a * golden + 1));
}

inline constexpr std::uint64_t key3(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b) {
  return mix64(key2(seed, a) ^ mix64(b * golden + 2));
}

// Uniform on [0, 1) with 53 random bits.
inline constexpr double to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

inline constexpr double uniform(std::uint64_t seed, std::int64_t site) {
  return to_unit(key2(seed, zigzag(site)));
}

inline constexpr double uniform(std::uint64_t seed, std::uint64_t sample,
                                std::int64_t site) {
  return to_unit(key3(seed, sample, zigzag(site)));
}

}  // namespace nlam::rng
