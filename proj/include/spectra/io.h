#pragma once

#include <cstdint>
#include <string>

#include "spectra/image.h"

namespace spectra {

// HSC1 cube file: magic "HSC1", u32 height, u32 width, u32 bands (= 31),
// float32 band-major planes, little-endian.
void save_cube(const std::string& path, const Image& cube);
Image load_cube(const std::string& path);

// Portable float map (color "PF", little-endian via negative scale).
void save_pfm(const std::string& path, const Image& rgb);
Image load_pfm(const std::string& path);

// 8-bit preview, values rounded from [0,1].
void save_ppm_preview(const std::string& path, const Image& rgb);

// 8-bit PGM label maps; 255 is the unlabeled sentinel.
void save_pgm(const std::string& path, const LabelMap& labels);
LabelMap load_pgm(const std::string& path);

// Plain key=value run configuration. Unknown keys are rejected against the
// fixed schema; '#' starts a comment line.
struct RunConfig {
  // loss weights
  double w_band = 10.0;
  double w_rgb = 5.0;
  double w_spectral = 5.0;
  double w_domain = 0.5;
  // recovery training
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int steps = 500;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double mrae_epsilon = 1e-6;
  int hidden_width = 64;
  // camera
  double sigma = 0.01;
  double nu = 1e4;
  double mu = 1.0;
  int jpeg_quality = 90;
  std::string mode = "sample";  // sample | differentiable
  // segmentation
  int n_filters = 12;
  int seg_hidden = 32;
  int seg_steps = 2000;
  double seg_learning_rate = 0.05;
  double seg_momentum = 0.9;
  int classes = 0;  // 0 = infer from label maps
};

RunConfig parse_config(const std::string& path);
RunConfig default_config();

}  // namespace spectra
