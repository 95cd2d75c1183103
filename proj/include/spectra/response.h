#pragma once

#include <span>
#include <string>
#include <vector>

namespace spectra {

inline constexpr int kRgbChannels = 3;

// RGB spectral sensitivities: a fixed non-negative 3 x bands base matrix plus
// one trainable per-band displacement shared across channels. The effective
// sensitivity is max(base + displacement, 0).
struct ResponseMatrix {
  int bands = 0;
  std::vector<double> base;          // kRgbChannels x bands, row-major
  std::vector<double> displacement;  // bands

  ResponseMatrix() = default;
  explicit ResponseMatrix(int n_bands)
      : bands(n_bands),
        base(static_cast<std::size_t>(kRgbChannels) * n_bands, 0.0),
        displacement(static_cast<std::size_t>(n_bands), 0.0) {}

  double base_at(int channel, int band) const {
    return base[static_cast<std::size_t>(channel) * bands + band];
  }
  double& base_at(int channel, int band) {
    return base[static_cast<std::size_t>(channel) * bands + band];
  }
};

// Validates invariants: non-negative base, at least one strictly positive
// entry per channel, matching vector lengths. Throws ValueError/ShapeError.
void validate_response(const ResponseMatrix& rm);

// max(base + displacement, 0), 3 x bands row-major.
std::vector<double> effective_matrix(const ResponseMatrix& rm);

// Sensitivity-weighted displacement penalty:
//   sum_c sum_b base[c,b] * |displacement[b]|.
// Zero exactly when the displacement vanishes wherever any channel is
// sensitive; 1-homogeneous in the displacement scale.
double band_loss(const ResponseMatrix& rm);

// Accumulates d(band_loss)/d(displacement) * upstream into d_displacement.
// The |.| subgradient at 0 is taken as 0.
void band_loss_backward(const ResponseMatrix& rm, double upstream,
                        std::span<double> d_displacement);

// Bundled synthetic curves: Gaussian-shaped R/G/B sensitivities peaking near
// 610/550/460 nm with 45 nm width and unit peak, on the standard grid.
ResponseMatrix synthetic_standard_curves();

// CSV with header `wavelength,r,g,b` and one row per band of the standard
// grid. Loading yields zero displacement. Throws FormatError on wrong row
// count, off-grid wavelengths or negative sensitivities.
ResponseMatrix load_standard_curves(const std::string& path);

// Writes a 3 x 31 sensitivity matrix in the same CSV layout (17 significant
// digits, so a reload reproduces the values bit-for-bit).
void save_response_csv(const std::string& path,
                       std::span<const double> matrix);

}  // namespace spectra
