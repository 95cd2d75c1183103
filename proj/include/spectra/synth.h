#pragma once

#include <cstdint>
#include <vector>

#include "spectra/image.h"
#include "spectra/spectral_db.h"

namespace spectra {

struct SynthConfig {
  int count = 8;   // scenes
  int size = 32;   // square images
  int classes = 4;
  std::uint64_t seed = 0;
  double unlabeled_fraction = 0.25;
  int db_per_class = 3;
};

struct SynthScene {
  Image cube;
  LabelMap labels;
  Image rgb_s;  // spectral-domain camera render
  Image rgb_m;  // material-domain camera render (different camera)
};

struct SynthData {
  std::vector<SynthScene> scenes;
  SpectralDb db;
  std::vector<double> photopic_curve;
  std::vector<double> melanopic_curve;
};

// Scenes are Voronoi mosaics of material classes. Every pixel's spectrum is
// a non-negative combination of 8 Gaussian basis functions: spectrum =
// M * u where M = basis * mixing (31x3) and u = class_direction * t with a
// smooth per-pixel intensity t. Spectra are therefore exactly linear in a
// per-pixel 3-vector, which keeps recovery well-posed at desk scale.
SynthData gen_synth(const SynthConfig& cfg);

// Pieces exposed so tests can rebuild the expected mixtures.
std::vector<double> synth_basis();                     // kBands x 8
std::vector<double> synth_mixing(std::uint64_t seed);  // 8 x 3
std::vector<double> synth_spectrum_matrix(std::uint64_t seed);  // kBands x 3
std::vector<double> synth_class_direction(std::uint64_t seed, int c,
                                          int classes);  // 3, sums to 1

}  // namespace spectra
