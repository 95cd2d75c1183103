#pragma once

#include <cstddef>
#include <span>

#include "spectra/image.h"

namespace spectra {

// Mean squared error over all elements. Symmetric.
double mse(std::span<const double> a, std::span<const double> b);
double mse(const Image& a, const Image& b);

// Mean relative absolute error |truth - est| / max(truth, epsilon).
// Not symmetric; the clamp keeps it finite for zero reflectance.
double mrae(std::span<const double> truth, std::span<const double> est,
            double epsilon);
double mrae(const Image& truth, const Image& est, double epsilon);

struct MinMax {
  double min = 0.0;
  double max = 0.0;
  std::size_t argmin = 0;  // first occurrence
  std::size_t argmax = 0;
};

MinMax find_min_max(std::span<const double> xs);

// Affine map of all values onto [0, 1]. Throws ValueError when the image is
// constant (degenerate range).
Image normalize_unit(const Image& img);

}  // namespace spectra
