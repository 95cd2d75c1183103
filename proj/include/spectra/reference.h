#pragma once

#include <span>
#include <vector>

#include "spectra/camera.h"
#include "spectra/filters.h"
#include "spectra/image.h"
#include "spectra/recovery.h"
#include "spectra/spectral_db.h"

// Plain serial implementations of the parallel kernels. They are kept as
// the comparison baseline for tests and the benchmark target; per-element
// kernels must agree bit-for-bit with the OpenMP paths, reductions to 1e-12.
namespace spectra::reference {

Image project_to_rgb(const Image& cube, const ResponseMatrix& rm);
Image gamma_encode(const Image& img);
Image jpeg_approx(const Image& img, int quality, CameraMode mode);
Image apply_filters(const Image& cube, const std::vector<double>& weights,
                    int n_filters);
Image recover(const Pipeline& pipe, const Image& rgb);

double mse(std::span<const double> a, std::span<const double> b);
double mrae(std::span<const double> truth, std::span<const double> est,
            double epsilon);

MatchResult match(std::span<const double> query_shape, const SpectralDb& db);
ObservationMap attach_observations(const Image& cube, const SpectralDb& db);

}  // namespace spectra::reference
