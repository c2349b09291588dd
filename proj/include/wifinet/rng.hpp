#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wifinet {

// splitmix64 finalizer; good enough to decorrelate derived stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent seed for a named stream so that one master seed
// drives every random decision in a run without streams aliasing.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(mix_seed(seed, stream));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return std::mt19937_64(mix_seed(seed, a, b));
}

// Standard-normal deviate as a pure hash of (seed, a, b): cheap enough to
// evaluate per (AP, grid cell) without carrying RNG state around.
inline double gaussian_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t h1 = mix_seed(seed, a, b);
  const std::uint64_t h2 = splitmix64(h1);
  // Box-Muller on two 53-bit uniforms
  const double u1 = ((h1 >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = (h2 >> 11) * 0x1.0p-53;          // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace wifinet
