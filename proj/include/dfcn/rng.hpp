#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dfcn {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// splitmix64 finalizer; used to derive independent stream seeds from
// (base seed, salt...) tuples, e.g. one per (epoch, patch).
inline std::uint64_t mix64(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return v ^ (v >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(base ^ mix64(a ^ mix64(b)));
}

// Hand-rolled draws: bitwise-stable across standard library versions,
// unlike std::uniform_*_distribution.
inline double uniform_real(Rng& rng, double lo = 0.0, double hi = 1.0) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t n) {
  // rejection sampling, unbiased for any n >= 1
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::int64_t>(v % un);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  // Marsaglia polar method, one value per call (second draw discarded
  // so state advances identically wherever it is used).
  double u, v, s;
  do {
    u = uniform_real(rng, -1.0, 1.0);
    v = uniform_real(rng, -1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return mean + stddev * u * std::sqrt(-2.0 * std::log(s) / s);
}

}  // namespace dfcn
