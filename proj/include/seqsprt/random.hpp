#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace seqsprt {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Order-sensitive hash of a key tuple; used to derive independent,
/// reproducible RNG streams from (seed, indices...).
inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts)
{
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts)
    h = splitmix64(h ^ splitmix64(p));
  return h;
}

inline std::mt19937_64 keyed_rng(std::initializer_list<std::uint64_t> parts) { return std::mt19937_64(hash_key(parts)); }

/// Uniform in [0, 1) with 53 random bits; identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01; identical across standard
/// libraries, unlike std::normal_distribution.
inline double standard_normal(std::mt19937_64& rng)
{
  double u1 = uniform01(rng);
  while (u1 <= 0.0)
    u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace seqsprt
