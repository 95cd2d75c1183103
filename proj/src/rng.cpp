#include "spectra/rng.h"

#include <cmath>

namespace spectra::rng {

double normal(Key k, std::uint64_t pair_index) {
  const double u1 = uniform(k, 2 * pair_index);
  const double u2 = uniform(k, 2 * pair_index + 1);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t poisson(Key k, std::uint64_t draw_base, double rate) {
  if (rate <= 0.0) return 0;
  if (rate <= 30.0) {
    // Inversion by sequential search over the CDF.
    const double u = uniform(k, draw_base);
    double p = std::exp(-rate);
    double cum = p;
    std::uint64_t n = 0;
    while (u > cum && n < 1000) {
      ++n;
      p *= rate / static_cast<double>(n);
      cum += p;
    }
    return n;
  }
  const double z = normal(k, draw_base);
  const double v = rate + std::sqrt(rate) * z;
  return v <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(v));
}

}  // namespace spectra::rng
