#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spectra/errors.h"

namespace spectra {

// The calibrated wavelength grid: 400..700 nm, step 10.
inline constexpr int kBands = 31;

inline double band_wavelength(int i) { return 400.0 + 10.0 * i; }

std::vector<double> band_grid();

// Throws FormatError unless ws is exactly the 31-point grid above.
void require_band_grid(std::span<const double> ws);

// Planar image: one plane per channel, row-major inside a plane. Used for
// hyperspectral cubes (31 channels), RGB images (3) and filtered feature
// maps (n_filters).
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c),
        height(h),
        width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const {
    return static_cast<std::size_t>(height) * width;
  }
  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  // Spectrum / pixel vector across channels at (y, x).
  std::vector<double> pixel(int y, int x) const {
    std::vector<double> out(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] = at(c, y, x);
    return out;
  }
};

inline bool same_shape(const Image& a, const Image& b) {
  return a.channels == b.channels && a.height == b.height &&
         a.width == b.width;
}

void require_same_shape(const Image& a, const Image& b, const char* what);
void require_channels(const Image& img, int channels, const char* what);

// Per-pixel integer class ids; 255 marks unlabeled pixels.
struct LabelMap {
  static constexpr std::uint8_t kUnlabeled = 255;

  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = kUnlabeled)
      : height(h), width(w),
        labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }
};

}  // namespace spectra
