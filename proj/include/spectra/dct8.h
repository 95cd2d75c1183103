#pragma once

#include <array>

namespace spectra::dct8 {

inline constexpr int kN = 8;

// Orthonormal DCT-II basis: kBasis[k][n] = c_k * cos(pi*(2n+1)*k/16),
// c_0 = sqrt(1/8), c_k = 1/2 otherwise. Rows are orthonormal, so the
// transform pair is exactly inverse up to rounding.
const std::array<std::array<double, kN>, kN>& basis();

// out = D * in * D^T (row-major 8x8 blocks).
void forward(const double* in, double* out);

// out = D^T * in * D.
void inverse(const double* in, double* out);

// Annex-K luminance quantization table, zig-zag-free row-major order.
extern const int kLumaTable[kN * kN];

// Quality-scaled divisors: scale = (100-q)/50 for q >= 50, 50/q below,
// each divisor floored at 1. Quality 100 gives all-ones.
std::array<double, kN * kN> quant_divisors(int quality);

}  // namespace spectra::dct8
