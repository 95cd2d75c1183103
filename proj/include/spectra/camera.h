#pragma once

#include <vector>

#include "spectra/image.h"
#include "spectra/metrics.h"
#include "spectra/response.h"
#include "spectra/rng.h"

namespace spectra {

enum class CameraMode { kSample, kDifferentiable };

struct CameraParams {
  double sigma = 0.01;  // thermal noise std dev on the normalized signal
  double nu = 1e4;      // shot-noise events per unit signal
  double mu = 1.0;      // brightness factor
  int jpeg_quality = 90;
  CameraMode mode = CameraMode::kSample;

  void validate() const;
};

// Per-pixel projection through the effective response matrix:
// rgb[c] = sum_b max(base + displacement, 0)[c,b] * spectrum[b].
Image project_to_rgb(const Image& cube, const ResponseMatrix& rm);

// rgb_noisy = mu * P((N(0, sigma) + rgb_clean) * nu) / nu, elementwise.
// Sample mode draws a true Poisson count; differentiable mode substitutes
// the reparameterized Gaussian surrogate rate + sqrt(rate) * eps with eps a
// fixed standard-normal draw, so gradients flow through the signal.
// Draws are keyed by (key, element index), independent of scheduling.
Image apply_noise(const Image& rgb_clean, const CameraParams& p,
                  rng::Key key);

// sRGB opto-electronic transfer. Input must lie in [0, 1].
Image gamma_encode(const Image& img);
double gamma_encode_value(double v);
double gamma_derivative(double v);

// 8x8 block DCT, quality-scaled quantization, rounding (soft in
// differentiable mode), inverse DCT. Sides are padded to multiples of 8 by
// edge replication; output is clamped to [0, 1]. Blocks run on the JPEG
// 0..255 scale internally, which is what the quantization table is sized to.
Image jpeg_approx(const Image& img, int quality, CameraMode mode);

// Full sRGB transformation:
//   jpeg(gamma(normalize(noise(project(h))))).
// Brightness is forced to 1 here: the [0,1] normalization absorbs any
// uniform scale. mu still applies in the standalone apply_noise op.
Image camera_forward(const Image& cube, const ResponseMatrix& rm,
                     const CameraParams& p, rng::Key key);

// ---- differentiable pipeline with recorded intermediates ----

struct CameraTape {
  // projection
  Image cube;
  std::vector<double> eff;       // 3 x bands
  std::vector<char> eff_active;  // base + displacement > 0
  int bands = 0;
  // noise
  Image rgb_clean;
  std::vector<double> eps0, eps1, rate;
  double sigma = 0.0, nu = 0.0, mu = 1.0;
  // normalize
  Image norm_out;
  MinMax mm;
  // jpeg
  int quality = 100;
  int padded_h = 0, padded_w = 0;
  std::vector<double> coeff;     // channels x padded_h x padded_w, per block
  std::vector<double> divisors;  // 64
  Image pre_clamp;
};

Image camera_forward_diff(const Image& cube, const ResponseMatrix& rm,
                          const CameraParams& p, rng::Key key,
                          CameraTape& tape);

struct CameraGrads {
  Image d_cube;
  std::vector<double> d_displacement;  // bands
  double d_sigma = 0.0;
  double d_nu = 0.0;
  double d_mu = 0.0;
};

CameraGrads camera_backward(const CameraTape& tape, const Image& d_out);

}  // namespace spectra
