#include "spectra/response.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spectra/errors.h"
#include "spectra/image.h"

namespace spectra {

void validate_response(const ResponseMatrix& rm) {
  if (rm.bands <= 0) throw ShapeError("response matrix: no bands");
  if (rm.base.size() != static_cast<std::size_t>(kRgbChannels) * rm.bands ||
      rm.displacement.size() != static_cast<std::size_t>(rm.bands)) {
    throw ShapeError("response matrix: inconsistent storage sizes");
  }
  for (int c = 0; c < kRgbChannels; ++c) {
    bool any_positive = false;
    for (int b = 0; b < rm.bands; ++b) {
      const double v = rm.base_at(c, b);
      if (!std::isfinite(v) || v < 0.0) {
        throw ValueError("response matrix: base sensitivity must be >= 0");
      }
      any_positive = any_positive || v > 0.0;
    }
    if (!any_positive) {
      throw ValueError("response matrix: channel " + std::to_string(c) +
                       " has no positive sensitivity");
    }
  }
}

std::vector<double> effective_matrix(const ResponseMatrix& rm) {
  std::vector<double> eff(rm.base.size());
  for (int c = 0; c < kRgbChannels; ++c) {
    for (int b = 0; b < rm.bands; ++b) {
      const double v = rm.base_at(c, b) + rm.displacement[static_cast<std::size_t>(b)];
      eff[static_cast<std::size_t>(c) * rm.bands + b] = v > 0.0 ? v : 0.0;
    }
  }
  return eff;
}

double band_loss(const ResponseMatrix& rm) {
  double total = 0.0;
  for (int c = 0; c < kRgbChannels; ++c) {
    for (int b = 0; b < rm.bands; ++b) {
      total += rm.base_at(c, b) *
               std::abs(rm.displacement[static_cast<std::size_t>(b)]);
    }
  }
  return total;
}

void band_loss_backward(const ResponseMatrix& rm, double upstream,
                        std::span<double> d_displacement) {
  for (int b = 0; b < rm.bands; ++b) {
    const double d = rm.displacement[static_cast<std::size_t>(b)];
    if (d == 0.0) continue;  // subgradient 0 at the kink
    const double sign = d > 0.0 ? 1.0 : -1.0;
    double weight = 0.0;
    for (int c = 0; c < kRgbChannels; ++c) weight += rm.base_at(c, b);
    d_displacement[static_cast<std::size_t>(b)] += upstream * weight * sign;
  }
}

ResponseMatrix synthetic_standard_curves() {
  ResponseMatrix rm(kBands);
  const double peaks[kRgbChannels] = {610.0, 550.0, 460.0};
  const double width = 45.0;
  for (int c = 0; c < kRgbChannels; ++c) {
    for (int b = 0; b < kBands; ++b) {
      const double t = (band_wavelength(b) - peaks[c]) / width;
      rm.base_at(c, b) = std::exp(-0.5 * t * t);
    }
  }
  return rm;
}

ResponseMatrix load_standard_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("curve file is empty: " + path);
  if (line == "wavelength,r,g,b\r") line.pop_back();
  if (line != "wavelength,r,g,b") {
    throw FormatError("curve file header must be 'wavelength,r,g,b', got '" +
                      line + "'");
  }
  std::vector<double> ws;
  ResponseMatrix rm(kBands);
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= kBands) {
      throw FormatError("curve file has more than 31 data rows");
    }
    std::istringstream ss(line);
    double w = 0.0, r = 0.0, g = 0.0, b = 0.0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ss >> w >> c1 >> r >> c2 >> g >> c3 >> b) || c1 != ',' ||
        c2 != ',' || c3 != ',') {
      throw FormatError("curve file row " + std::to_string(row + 1) +
                        " is malformed: '" + line + "'");
    }
    ws.push_back(w);
    rm.base_at(0, row) = r;
    rm.base_at(1, row) = g;
    rm.base_at(2, row) = b;
    ++row;
  }
  if (row != kBands) {
    throw FormatError("curve file must have 31 data rows, got " +
                      std::to_string(row));
  }
  require_band_grid(ws);
  for (int c = 0; c < kRgbChannels; ++c) {
    for (int b = 0; b < kBands; ++b) {
      if (!(rm.base_at(c, b) >= 0.0)) {
        throw FormatError("curve file has a negative sensitivity at " +
                          std::to_string(band_wavelength(b)) + " nm");
      }
    }
  }
  validate_response(rm);
  return rm;
}

void save_response_csv(const std::string& path,
                       std::span<const double> matrix) {
  if (matrix.size() != static_cast<std::size_t>(kRgbChannels) * kBands) {
    throw ShapeError("save_response_csv: matrix must be 3x31");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curve file: " + path);
  out << "wavelength,r,g,b\n";
  char buf[96];
  for (int b = 0; b < kBands; ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n",
                  band_wavelength(b), matrix[static_cast<std::size_t>(b)],
                  matrix[static_cast<std::size_t>(kBands + b)],
                  matrix[static_cast<std::size_t>(2 * kBands + b)]);
    out << buf;
  }
  if (!out) throw IoError("failed writing curve file: " + path);
}

}  // namespace spectra
