#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace specbreak {

// SplitMix64 finalizer. Used to derive independent seed streams from
// (seed, id...) tuples so that parallel work is schedule-independent.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed) { return mix64(seed); }

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  return mix64(seed ^ mix64(a + 0x9E3779B97F4A7C15ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b, std::uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform in (0,1), never returning an exact 0 (safe for log()).
inline double uniform_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Stateless standard normal draw addressed by (stream, counter), via
// Box-Muller on two SplitMix64 outputs. Used where draws must not depend on
// evaluation order or on how many neighbours were drawn.
inline double counter_normal(std::uint64_t stream, std::uint64_t counter) {
  double u1 = uniform_open(mix64(stream + 2 * counter));
  double u2 = uniform_open(mix64(stream + 2 * counter + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace specbreak
