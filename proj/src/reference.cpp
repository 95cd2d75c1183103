#include "spectra/reference.h"

#include <algorithm>
#include <cmath>

#include "spectra/dct8.h"

namespace spectra::reference {

Image project_to_rgb(const Image& cube, const ResponseMatrix& rm) {
  if (cube.channels != rm.bands) {
    throw ShapeError("reference project_to_rgb: band mismatch");
  }
  const std::vector<double> eff = effective_matrix(rm);
  Image rgb(kRgbChannels, cube.height, cube.width);
  for (int c = 0; c < kRgbChannels; ++c) {
    for (int y = 0; y < cube.height; ++y) {
      for (int x = 0; x < cube.width; ++x) {
        double acc = 0.0;
        for (int b = 0; b < rm.bands; ++b) {
          acc += eff[static_cast<std::size_t>(c) * rm.bands + b] * cube.at(b, y, x);
        }
        rgb.at(c, y, x) = acc;
      }
    }
  }
  return rgb;
}

Image gamma_encode(const Image& img) {
  Image out(img.channels, img.height, img.width);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img.data[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValueError("reference gamma_encode: value outside [0, 1]");
    }
    out.data[i] = gamma_encode_value(v);
  }
  return out;
}

Image jpeg_approx(const Image& img, int quality, CameraMode mode) {
  const int h = img.height, w = img.width;
  const int ph = (h + 7) / 8 * 8;
  const int pw = (w + 7) / 8 * 8;
  const auto div = dct8::quant_divisors(quality);
  const bool soft = mode == CameraMode::kDifferentiable;
  Image out(img.channels, h, w);
  for (int c = 0; c < img.channels; ++c) {
    for (int by = 0; by < ph / 8; ++by) {
      for (int bx = 0; bx < pw / 8; ++bx) {
        double block[64], freq[64], back[64];
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            const int sy = std::min(by * 8 + y, h - 1);
            const int sx = std::min(bx * 8 + x, w - 1);
            block[y * 8 + x] = 255.0 * img.at(c, sy, sx) - 128.0;
          }
        }
        dct8::forward(block, freq);
        for (int i = 0; i < 64; ++i) {
          const double coeff = freq[i] / div[static_cast<std::size_t>(i)];
          const double rounded =
              soft ? coeff - std::sin(2.0 * 3.14159265358979323846 * coeff) /
                                 (2.0 * 3.14159265358979323846)
                   : std::nearbyint(coeff);
          freq[i] = rounded * div[static_cast<std::size_t>(i)];
        }
        dct8::inverse(freq, back);
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) {
            const int ty = by * 8 + y;
            const int tx = bx * 8 + x;
            if (ty >= h || tx >= w) continue;
            out.at(c, ty, tx) =
                std::clamp((back[y * 8 + x] + 128.0) / 255.0, 0.0, 1.0);
          }
        }
      }
    }
  }
  return out;
}

Image apply_filters(const Image& cube, const std::vector<double>& weights,
                    int n_filters) {
  Image feat(n_filters, cube.height, cube.width);
  for (int k = 0; k < n_filters; ++k) {
    for (int y = 0; y < cube.height; ++y) {
      for (int x = 0; x < cube.width; ++x) {
        double acc = 0.0;
        for (int b = 0; b < cube.channels; ++b) {
          acc += weights[static_cast<std::size_t>(k) * cube.channels + b] *
                 cube.at(b, y, x);
        }
        feat.at(k, y, x) = acc;
      }
    }
  }
  return feat;
}

Image recover(const Pipeline& pipe, const Image& rgb) {
  const int h = rgb.height, w = rgb.width, hid = pipe.hidden;
  const auto w1 = pipe.params.view("trunk.w1");
  const auto b1 = pipe.params.view("trunk.b1");
  const auto w2 = pipe.params.view("trunk.w2");
  const auto b2 = pipe.params.view("trunk.b2");
  const auto w3 = pipe.params.view("trunk.w3");
  const auto b3 = pipe.params.view("trunk.b3");
  Image cube(kBands, h, w);
  std::vector<double> patch(27), z1(static_cast<std::size_t>(hid)),
      z2(static_cast<std::size_t>(hid));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int sy = std::clamp(y + dy, 0, h - 1);
            const int sx = std::clamp(x + dx, 0, w - 1);
            patch[static_cast<std::size_t>(c * 9 + (dy + 1) * 3 + (dx + 1))] =
                rgb.at(c, sy, sx);
          }
        }
      }
      for (int i = 0; i < hid; ++i) {
        double acc = b1[static_cast<std::size_t>(i)];
        for (int j = 0; j < 27; ++j) {
          acc += w1[static_cast<std::size_t>(i) * 27 + j] * patch[static_cast<std::size_t>(j)];
        }
        z1[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
      }
      for (int i = 0; i < hid; ++i) {
        double acc = b2[static_cast<std::size_t>(i)];
        for (int j = 0; j < hid; ++j) {
          acc += w2[static_cast<std::size_t>(i) * hid + j] * z1[static_cast<std::size_t>(j)];
        }
        z2[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
      }
      for (int b = 0; b < kBands; ++b) {
        double acc = b3[static_cast<std::size_t>(b)];
        for (int j = 0; j < hid; ++j) {
          acc += w3[static_cast<std::size_t>(b) * hid + j] * z2[static_cast<std::size_t>(j)];
        }
        cube.at(b, y, x) =
            acc > 0.0 ? acc + std::log1p(std::exp(-acc)) : std::log1p(std::exp(acc));
      }
    }
  }
  return cube;
}

double mse(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double mrae(std::span<const double> truth, std::span<const double> est,
            double epsilon) {
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    acc += std::abs(truth[i] - est[i]) / std::max(truth[i], epsilon);
  }
  return acc / static_cast<double>(truth.size());
}

MatchResult match(std::span<const double> query_shape, const SpectralDb& db) {
  if (db.entries.empty()) throw ValueError("reference match: empty db");
  MatchResult best;
  double best_sq = 0.0;
  for (std::size_t k = 0; k < db.shapes.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < query_shape.size(); ++i) {
      const double d = query_shape[i] - db.shapes[k][i];
      acc += d * d;
    }
    if (best.index < 0 || acc < best_sq) {
      best_sq = acc;
      best.index = static_cast<int>(k);
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

ObservationMap attach_observations(const Image& cube, const SpectralDb& db) {
  ObservationMap out;
  out.observations = Image(3, cube.height, cube.width);
  out.index.assign(cube.plane(), -1);
  out.distance.assign(cube.plane(), 0.0);
  for (int y = 0; y < cube.height; ++y) {
    for (int x = 0; x < cube.width; ++x) {
      const std::size_t pi = static_cast<std::size_t>(y) * cube.width + x;
      const std::vector<double> spec = cube.pixel(y, x);
      const MatchResult mr = reference::match(shape_matrix(spec), db);
      const SpectralDbEntry& e = db.entries[static_cast<std::size_t>(mr.index)];
      out.index[pi] = mr.index;
      out.distance[pi] = mr.distance;
      out.observations.at(0, y, x) = e.photopic;
      out.observations.at(1, y, x) = e.specularity;
      out.observations.at(2, y, x) = e.roughness;
    }
  }
  return out;
}

}  // namespace spectra::reference
