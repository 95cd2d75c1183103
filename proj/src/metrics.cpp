#include "spectra/metrics.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "spectra/errors.h"
#include "spectra/parallel.h"

namespace spectra {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b,
                       const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": size mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}

}  // namespace

double mse(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "mse");
  if (a.empty()) return 0.0;
  const double total = deterministic_transform_sum(
      static_cast<std::int64_t>(a.size()), [&](std::int64_t i) {
        const double d = a[static_cast<std::size_t>(i)] -
                         b[static_cast<std::size_t>(i)];
        return d * d;
      });
  return total / static_cast<double>(a.size());
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  return mse(std::span<const double>(a.data), std::span<const double>(b.data));
}

double mrae(std::span<const double> truth, std::span<const double> est,
            double epsilon) {
  require_same_size(truth, est, "mrae");
  if (epsilon <= 0.0) throw ValueError("mrae: epsilon must be > 0");
  if (truth.empty()) return 0.0;
  const double total = deterministic_transform_sum(
      static_cast<std::int64_t>(truth.size()), [&](std::int64_t i) {
        const std::size_t j = static_cast<std::size_t>(i);
        return std::abs(truth[j] - est[j]) / std::max(truth[j], epsilon);
      });
  return total / static_cast<double>(truth.size());
}

double mrae(const Image& truth, const Image& est, double epsilon) {
  require_same_shape(truth, est, "mrae");
  return mrae(std::span<const double>(truth.data),
              std::span<const double>(est.data), epsilon);
}

MinMax find_min_max(std::span<const double> xs) {
  MinMax mm;
  if (xs.empty()) return mm;
  mm.min = mm.max = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] < mm.min) {
      mm.min = xs[i];
      mm.argmin = i;
    }
    if (xs[i] > mm.max) {
      mm.max = xs[i];
      mm.argmax = i;
    }
  }
  return mm;
}

Image normalize_unit(const Image& img) {
  for (double v : img.data) {
    if (!std::isfinite(v)) throw ValueError("normalize_unit: non-finite value");
  }
  const MinMax mm = find_min_max(img.data);
  const double range = mm.max - mm.min;
  if (!(range > 0.0)) {
    throw ValueError("normalize_unit: constant image has no range to map");
  }
  Image out(img.channels, img.height, img.width);
  parallel_for(static_cast<std::int64_t>(img.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    out.data[j] = (img.data[j] - mm.min) / range;
  });
  return out;
}

}  // namespace spectra
