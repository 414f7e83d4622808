#pragma once

#include <cstdint>
#include <random>

namespace gwpdti {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, a, b). Streams for distinct
/// coordinates are independent of the order in which they are requested.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xd6e8feb86659fd93ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Engine(derive_seed(seed, a, b));
}

inline double standard_normal(Engine& eng) {
  return std::normal_distribution<double>(0.0, 1.0)(eng);
}

/// Uniform on [0, 1).
inline double uniform01(Engine& eng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng);
}

}  // namespace gwpdti
