#include "spectra/filters.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spectra/parallel.h"

namespace spectra {

std::vector<double> effective_filters(const FilterBank& fb) {
  std::vector<double> w(fb.logits.size());
  for (int k = 0; k < fb.n_filters; ++k) {
    const double* row = fb.logits.data() + static_cast<std::size_t>(k) * fb.bands;
    double* out = w.data() + static_cast<std::size_t>(k) * fb.bands;
    double mx = row[0];
    for (int b = 1; b < fb.bands; ++b) mx = std::max(mx, row[b]);
    double sum = 0.0;
    for (int b = 0; b < fb.bands; ++b) {
      out[b] = std::exp(row[b] - mx);
      sum += out[b];
    }
    for (int b = 0; b < fb.bands; ++b) out[b] /= sum;
  }
  return w;
}

Image apply_filters(const Image& cube, const std::vector<double>& weights,
                    int n_filters) {
  const int bands = cube.channels;
  if (weights.size() != static_cast<std::size_t>(n_filters) * bands) {
    throw ShapeError("apply_filters: weights are not n_filters x bands");
  }
  Image feat(n_filters, cube.height, cube.width);
  const std::int64_t npx = static_cast<std::int64_t>(cube.plane());
  parallel_for(npx, [&](std::int64_t p) {
    const std::size_t pi = static_cast<std::size_t>(p);
    for (int k = 0; k < n_filters; ++k) {
      const double* w = weights.data() + static_cast<std::size_t>(k) * bands;
      double acc = 0.0;
      for (int b = 0; b < bands; ++b) {
        acc += w[b] * cube.data[static_cast<std::size_t>(b) * cube.plane() + pi];
      }
      feat.data[static_cast<std::size_t>(k) * cube.plane() + pi] = acc;
    }
  });
  return feat;
}

Image apply_filters(const Image& cube, const FilterBank& fb) {
  if (cube.channels != fb.bands) {
    throw ShapeError("apply_filters: cube band count does not match bank");
  }
  return apply_filters(cube, effective_filters(fb), fb.n_filters);
}

void apply_filters_backward(const Image& cube, const FilterBank& fb,
                            const Image& features, const Image& d_features,
                            std::vector<double>& d_logits) {
  const std::vector<double> w = effective_filters(fb);
  const std::int64_t npx = static_cast<std::int64_t>(cube.plane());
  for (int k = 0; k < fb.n_filters; ++k) {
    for (int b = 0; b < fb.bands; ++b) {
      const double wkb = w[static_cast<std::size_t>(k) * fb.bands + b];
      const double acc = deterministic_transform_sum(npx, [&](std::int64_t p) {
        const std::size_t pi = static_cast<std::size_t>(p);
        const double df =
            d_features.data[static_cast<std::size_t>(k) * cube.plane() + pi];
        if (df == 0.0) return 0.0;
        const double hb =
            cube.data[static_cast<std::size_t>(b) * cube.plane() + pi];
        const double fk =
            features.data[static_cast<std::size_t>(k) * cube.plane() + pi];
        return df * (hb - fk);
      });
      d_logits[static_cast<std::size_t>(k) * fb.bands + b] += wkb * acc;
    }
  }
}

void export_filters_csv(const std::string& path, const FilterBank& fb) {
  if (fb.bands != kBands) {
    throw ShapeError("export_filters_csv: bank must be on the 31-band grid");
  }
  const std::vector<double> w = effective_filters(fb);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write filter file: " + path);
  out << "wavelength";
  for (int k = 0; k < fb.n_filters; ++k) out << ",f" << (k + 1);
  out << "\n";
  char buf[64];
  for (int b = 0; b < kBands; ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g", band_wavelength(b));
    out << buf;
    for (int k = 0; k < fb.n_filters; ++k) {
      std::snprintf(buf, sizeof(buf), ",%.17g",
                    w[static_cast<std::size_t>(k) * kBands + b]);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing filter file: " + path);
}

LoadedFilters load_filters_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open filter file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("filter file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("wavelength,f1", 0) != 0) {
    throw FormatError("filter file header must start 'wavelength,f1'");
  }
  int n_filters = 0;
  for (char c : line) n_filters += c == ',' ? 1 : 0;
  LoadedFilters lf;
  lf.n_filters = n_filters;
  lf.weights.assign(static_cast<std::size_t>(n_filters) * kBands, 0.0);
  std::vector<double> ws;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= kBands) throw FormatError("filter file has too many rows");
    std::istringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw FormatError("filter file row short");
    ws.push_back(std::stod(cell));
    for (int k = 0; k < n_filters; ++k) {
      if (!std::getline(ss, cell, ',')) {
        throw FormatError("filter file row " + std::to_string(row + 1) +
                          " has too few columns");
      }
      lf.weights[static_cast<std::size_t>(k) * kBands + row] = std::stod(cell);
    }
    ++row;
  }
  if (row != kBands) {
    throw FormatError("filter file must have 31 rows, got " +
                      std::to_string(row));
  }
  require_band_grid(ws);
  return lf;
}

}  // namespace spectra
