#include "spectra/dct8.h"

#include <cmath>

#include "spectra/errors.h"

namespace spectra::dct8 {

const std::array<std::array<double, kN>, kN>& basis() {
  static const auto table = [] {
    std::array<std::array<double, kN>, kN> d{};
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < kN; ++k) {
      const double ck = k == 0 ? std::sqrt(1.0 / kN) : std::sqrt(2.0 / kN);
      for (int n = 0; n < kN; ++n) {
        d[k][n] = ck * std::cos(pi * (2 * n + 1) * k / (2.0 * kN));
      }
    }
    return d;
  }();
  return table;
}

namespace {

// tmp = D * in, out = tmp * D^T  (or transposed variant for the inverse).
void transform(const double* in, double* out, bool forward_dir) {
  const auto& d = basis();
  double tmp[kN * kN];
  for (int k = 0; k < kN; ++k) {
    for (int n = 0; n < kN; ++n) {
      double acc = 0.0;
      for (int j = 0; j < kN; ++j) {
        const double dk = forward_dir ? d[k][j] : d[j][k];
        acc += dk * in[j * kN + n];
      }
      tmp[k * kN + n] = acc;
    }
  }
  for (int k = 0; k < kN; ++k) {
    for (int n = 0; n < kN; ++n) {
      double acc = 0.0;
      for (int j = 0; j < kN; ++j) {
        const double dn = forward_dir ? d[n][j] : d[j][n];
        acc += tmp[k * kN + j] * dn;
      }
      out[k * kN + n] = acc;
    }
  }
}

}  // namespace

void forward(const double* in, double* out) { transform(in, out, true); }
void inverse(const double* in, double* out) { transform(in, out, false); }

const int kLumaTable[kN * kN] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::array<double, kN * kN> quant_divisors(int quality) {
  if (quality < 1 || quality > 100) {
    throw ValueError("jpeg quality must be in [1, 100]");
  }
  const double scale = quality >= 50 ? (100.0 - quality) / 50.0
                                     : 50.0 / quality;
  std::array<double, kN * kN> div{};
  for (int i = 0; i < kN * kN; ++i) {
    const double v = kLumaTable[i] * scale;
    div[static_cast<std::size_t>(i)] = v > 1.0 ? v : 1.0;
  }
  return div;
}

}  // namespace spectra::dct8
