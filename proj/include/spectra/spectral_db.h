#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spectra/image.h"

namespace spectra {

// One spectrophotometer measurement with human-observation attributes.
struct SpectralDbEntry {
  std::string id;
  int label = 0;
  double specularity = 0.0;  // [0, 1]
  double roughness = 0.0;    // [0, 1]
  double photopic = 0.0;     // >= 0
  double melanopic = 0.0;    // >= 0
  std::vector<double> spectrum;  // reflectance on the band grid
};

// Pairwise band differences S[a,b] = |s_a - s_b|, flattened n x n.
// Symmetric, zero diagonal, invariant to constant offsets of s.
std::vector<double> shape_matrix(std::span<const double> s);

struct SpectralDb {
  std::vector<SpectralDbEntry> entries;
  std::vector<std::vector<double>> shapes;  // per-entry shape matrices

  void build_shapes();
};

struct MatchResult {
  int index = -1;
  double distance = 0.0;
};

// Entry minimizing the elementwise L2 (Frobenius) distance between shape
// matrices; ties keep the lowest index. Throws ValueError on an empty db.
MatchResult match(std::span<const double> query_shape, const SpectralDb& db);

struct ObservationMap {
  Image observations;             // 3 planes: photopic, specularity, roughness
  std::vector<std::int32_t> index;
  std::vector<double> distance;
};

// Matches every pixel's spectrum shape against the db and appends the
// winner's observations.
ObservationMap attach_observations(const Image& cube, const SpectralDb& db);

// sum(w * s) / sum(w); rejects all-zero or negative weighting curves.
double weighted_reflectance(std::span<const double> spectrum,
                            std::span<const double> weighting_curve);

// CSV `id,label,specularity,roughness,photopic,melanopic,r400,...,r700`.
SpectralDb load_spectral_db(const std::string& path);
void save_spectral_db(const std::string& path, const SpectralDb& db);

// CSV `wavelength,weight`, 31 rows on the band grid.
std::vector<double> load_weighting_curve(const std::string& path);
void save_weighting_curve(const std::string& path,
                          std::span<const double> curve);

}  // namespace spectra
