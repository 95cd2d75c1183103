#pragma once

#include <cstdint>

namespace spectra::rng {

// Counter-based generator: every draw is a pure hash of (key, draw index).
// Results never depend on evaluation order or thread scheduling, which is
// what makes the noise pipeline bit-stable across thread counts.

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

struct Key {
  std::uint64_t state = 0;
};

inline Key key(std::uint64_t seed) {
  return Key{mix64(seed + 0x9e3779b97f4a7c15ULL)};
}

// Derives an independent substream, e.g. per pixel or per training pass.
inline Key fork(Key k, std::uint64_t index) {
  return Key{mix64(k.state + 0x9e3779b97f4a7c15ULL * (index + 1))};
}

// Uniform in (0, 1]; never returns 0 so log() stays finite.
inline double uniform(Key k, std::uint64_t draw) {
  const std::uint64_t h = mix64(k.state + 0xd1b54a32d192ed03ULL * (draw + 1));
  return static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Key k, std::uint64_t draw,
                                   std::uint64_t n) {
  const double u = uniform(k, draw);
  std::uint64_t i = static_cast<std::uint64_t>(u * static_cast<double>(n));
  return i >= n ? n - 1 : i;
}

// Standard normal via Box-Muller; consumes uniform draws 2i and 2i+1.
double normal(Key k, std::uint64_t pair_index);

// Poisson sample: exact inversion for rate <= 30, rounded Gaussian
// approximation above. Consumes draws starting at draw_base (at most 2
// uniform pairs).
std::uint64_t poisson(Key k, std::uint64_t draw_base, double rate);

}  // namespace spectra::rng
