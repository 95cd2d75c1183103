#include "spectra/image.h"

#include <cmath>
#include <string>

namespace spectra {

std::vector<double> band_grid() {
  std::vector<double> ws(static_cast<std::size_t>(kBands));
  for (int i = 0; i < kBands; ++i) ws[static_cast<std::size_t>(i)] = band_wavelength(i);
  return ws;
}

void require_band_grid(std::span<const double> ws) {
  if (ws.size() != static_cast<std::size_t>(kBands)) {
    throw FormatError("wavelength grid must have 31 entries, got " +
                      std::to_string(ws.size()));
  }
  for (int i = 0; i < kBands; ++i) {
    if (ws[static_cast<std::size_t>(i)] != band_wavelength(i)) {
      throw FormatError("wavelength at row " + std::to_string(i) +
                        " must be " + std::to_string(band_wavelength(i)) +
                        " nm");
    }
  }
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!same_shape(a, b)) {
    throw ShapeError(std::string(what) + ": shape mismatch (" +
                     std::to_string(a.channels) + "x" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs " + std::to_string(b.channels) + "x" +
                     std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
  }
}

void require_channels(const Image& img, int channels, const char* what) {
  if (img.channels != channels) {
    throw ShapeError(std::string(what) + ": expected " +
                     std::to_string(channels) + " channels, got " +
                     std::to_string(img.channels));
  }
}

}  // namespace spectra
