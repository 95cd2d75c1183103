#include "spectra/camera.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "spectra/dct8.h"
#include "spectra/parallel.h"

namespace spectra {

namespace {

// Per-element draw layout: thermal normal at pair 0, surrogate normal at
// pair 1, Poisson sampling starting at draw 4.
constexpr std::uint64_t kThermalPair = 0;
constexpr std::uint64_t kSurrogatePair = 1;
constexpr std::uint64_t kPoissonBase = 4;

constexpr double kTwoPi = 6.28318530717958647692;

double soft_round(double x) { return x - std::sin(kTwoPi * x) / kTwoPi; }
double soft_round_derivative(double x) { return 1.0 - std::cos(kTwoPi * x); }

}  // namespace

void CameraParams::validate() const {
  if (!(sigma >= 0.0)) throw ValueError("camera: sigma must be >= 0");
  if (!(nu > 0.0)) throw ValueError("camera: nu must be > 0");
  if (!(mu > 0.0)) throw ValueError("camera: mu must be > 0");
  if (jpeg_quality < 1 || jpeg_quality > 100) {
    throw ValueError("camera: jpeg_quality must be in [1, 100]");
  }
}

Image project_to_rgb(const Image& cube, const ResponseMatrix& rm) {
  if (cube.channels != rm.bands) {
    throw ShapeError("project_to_rgb: cube has " +
                     std::to_string(cube.channels) + " bands, response has " +
                     std::to_string(rm.bands));
  }
  const std::vector<double> eff = effective_matrix(rm);
  Image rgb(kRgbChannels, cube.height, cube.width);
  const std::int64_t n = static_cast<std::int64_t>(cube.plane());
  parallel_for(n, [&](std::int64_t p) {
    const std::size_t pi = static_cast<std::size_t>(p);
    for (int c = 0; c < kRgbChannels; ++c) {
      const double* w = eff.data() + static_cast<std::size_t>(c) * rm.bands;
      double acc = 0.0;
      for (int b = 0; b < rm.bands; ++b) {
        acc += w[b] * cube.data[static_cast<std::size_t>(b) * cube.plane() + pi];
      }
      rgb.data[static_cast<std::size_t>(c) * cube.plane() + pi] = acc;
    }
  });
  return rgb;
}

namespace {

Image apply_noise_impl(const Image& rgb_clean, const CameraParams& p,
                       rng::Key key, CameraTape* tape) {
  p.validate();
  Image out(rgb_clean.channels, rgb_clean.height, rgb_clean.width);
  const std::int64_t n = static_cast<std::int64_t>(rgb_clean.size());
  if (tape != nullptr) {
    tape->rgb_clean = rgb_clean;
    tape->eps0.assign(static_cast<std::size_t>(n), 0.0);
    tape->eps1.assign(static_cast<std::size_t>(n), 0.0);
    tape->rate.assign(static_cast<std::size_t>(n), 0.0);
    tape->sigma = p.sigma;
    tape->nu = p.nu;
    tape->mu = p.mu;
  }
  const bool differentiable = p.mode == CameraMode::kDifferentiable;
  parallel_for(n, [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    const rng::Key ek = rng::fork(key, static_cast<std::uint64_t>(i));
    const double e0 = rng::normal(ek, kThermalPair);
    const double y = rgb_clean.data[j] + p.sigma * e0;
    const double t = y * p.nu;
    const double rate = t > 0.0 ? t : 0.0;
    double count;
    double e1 = 0.0;
    if (differentiable) {
      e1 = rng::normal(ek, kSurrogatePair);
      count = rate + std::sqrt(rate) * e1;
    } else {
      count = static_cast<double>(rng::poisson(ek, kPoissonBase, rate));
    }
    out.data[j] = p.mu * count / p.nu;
    if (tape != nullptr) {
      tape->eps0[j] = e0;
      tape->eps1[j] = e1;
      tape->rate[j] = rate;
    }
  });
  return out;
}

}  // namespace

Image apply_noise(const Image& rgb_clean, const CameraParams& p,
                  rng::Key key) {
  return apply_noise_impl(rgb_clean, p, key, nullptr);
}

double gamma_encode_value(double v) {
  return v <= 0.0031308 ? 12.92 * v
                        : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double gamma_derivative(double v) {
  return v <= 0.0031308
             ? 12.92
             : (1.055 / 2.4) * std::pow(v, 1.0 / 2.4 - 1.0);
}

Image gamma_encode(const Image& img) {
  for (double v : img.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValueError("gamma_encode: value " + std::to_string(v) +
                       " outside [0, 1]");
    }
  }
  Image out(img.channels, img.height, img.width);
  parallel_for(static_cast<std::int64_t>(img.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    out.data[j] = gamma_encode_value(img.data[j]);
  });
  return out;
}

namespace {

Image jpeg_impl(const Image& img, int quality, CameraMode mode,
                CameraTape* tape) {
  const int h = img.height, w = img.width;
  const int ph = (h + dct8::kN - 1) / dct8::kN * dct8::kN;
  const int pw = (w + dct8::kN - 1) / dct8::kN * dct8::kN;
  const auto div = dct8::quant_divisors(quality);
  const bool soft = mode == CameraMode::kDifferentiable;

  Image padded(img.channels, ph, pw);
  parallel_for(static_cast<std::int64_t>(img.channels) * ph, [&](std::int64_t r) {
    const int c = static_cast<int>(r / ph);
    const int py = static_cast<int>(r % ph);
    const int sy = py < h ? py : h - 1;
    for (int px = 0; px < pw; ++px) {
      const int sx = px < w ? px : w - 1;
      padded.at(c, py, px) = img.at(c, sy, sx);
    }
  });

  if (tape != nullptr) {
    tape->quality = quality;
    tape->padded_h = ph;
    tape->padded_w = pw;
    tape->coeff.assign(static_cast<std::size_t>(img.channels) * ph * pw, 0.0);
    tape->divisors.assign(div.begin(), div.end());
  }

  const int blocks_y = ph / dct8::kN;
  const int blocks_x = pw / dct8::kN;
  Image recon(img.channels, ph, pw);
  parallel_for(static_cast<std::int64_t>(img.channels) * blocks_y * blocks_x,
               [&](std::int64_t bi) {
    const int c = static_cast<int>(bi / (blocks_y * blocks_x));
    const int by = static_cast<int>(bi / blocks_x % blocks_y);
    const int bx = static_cast<int>(bi % blocks_x);
    double block[64], freq[64], back[64];
    for (int y = 0; y < dct8::kN; ++y) {
      for (int x = 0; x < dct8::kN; ++x) {
        block[y * dct8::kN + x] =
            255.0 * padded.at(c, by * dct8::kN + y, bx * dct8::kN + x) - 128.0;
      }
    }
    dct8::forward(block, freq);
    for (int i = 0; i < 64; ++i) {
      const double coeff = freq[i] / div[static_cast<std::size_t>(i)];
      if (tape != nullptr) {
        const int y = by * dct8::kN + i / dct8::kN;
        const int x = bx * dct8::kN + i % dct8::kN;
        tape->coeff[(static_cast<std::size_t>(c) * ph + y) * pw + x] = coeff;
      }
      const double rounded =
          soft ? soft_round(coeff) : std::nearbyint(coeff);
      freq[i] = rounded * div[static_cast<std::size_t>(i)];
    }
    dct8::inverse(freq, back);
    for (int y = 0; y < dct8::kN; ++y) {
      for (int x = 0; x < dct8::kN; ++x) {
        recon.at(c, by * dct8::kN + y, bx * dct8::kN + x) =
            (back[y * dct8::kN + x] + 128.0) / 255.0;
      }
    }
  });

  Image out(img.channels, h, w);
  if (tape != nullptr) tape->pre_clamp = Image(img.channels, h, w);
  parallel_for(static_cast<std::int64_t>(img.channels) * h, [&](std::int64_t r) {
    const int c = static_cast<int>(r / h);
    const int y = static_cast<int>(r % h);
    for (int x = 0; x < w; ++x) {
      const double v = recon.at(c, y, x);
      if (tape != nullptr) tape->pre_clamp.at(c, y, x) = v;
      out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
    }
  });
  return out;
}

Image camera_forward_impl(const Image& cube, const ResponseMatrix& rm,
                          const CameraParams& p, rng::Key key,
                          CameraTape* tape) {
  CameraParams pipeline = p;
  pipeline.mu = 1.0;  // the normalization stage absorbs any uniform scale
  Image rgb = project_to_rgb(cube, rm);
  if (tape != nullptr) {
    tape->cube = cube;
    tape->bands = rm.bands;
    tape->eff = effective_matrix(rm);
    tape->eff_active.assign(tape->eff.size(), 0);
    for (std::size_t i = 0; i < tape->eff.size(); ++i) {
      tape->eff_active[i] = tape->eff[i] > 0.0 ? 1 : 0;
    }
  }
  Image noisy = apply_noise_impl(rgb, pipeline, key, tape);
  Image norm = normalize_unit(noisy);
  if (tape != nullptr) {
    tape->norm_out = norm;
    tape->mm = find_min_max(noisy.data);
  }
  Image gam = gamma_encode(norm);
  return jpeg_impl(gam, pipeline.jpeg_quality, pipeline.mode, tape);
}

}  // namespace

Image jpeg_approx(const Image& img, int quality, CameraMode mode) {
  for (double v : img.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValueError("jpeg_approx: input outside [0, 1]");
    }
  }
  return jpeg_impl(img, quality, mode, nullptr);
}

Image camera_forward(const Image& cube, const ResponseMatrix& rm,
                     const CameraParams& p, rng::Key key) {
  return camera_forward_impl(cube, rm, p, key, nullptr);
}

Image camera_forward_diff(const Image& cube, const ResponseMatrix& rm,
                          const CameraParams& p, rng::Key key,
                          CameraTape& tape) {
  if (p.mode != CameraMode::kDifferentiable) {
    throw ValueError("camera_forward_diff requires differentiable mode");
  }
  return camera_forward_impl(cube, rm, p, key, &tape);
}

CameraGrads camera_backward(const CameraTape& tape, const Image& d_out) {
  const int h = tape.pre_clamp.height, w = tape.pre_clamp.width;
  const int ph = tape.padded_h, pw = tape.padded_w;
  const int channels = tape.pre_clamp.channels;
  require_same_shape(d_out, tape.pre_clamp, "camera_backward");

  // clamp + crop: zero gradient outside [0,1], zero rows/cols that were
  // dropped by the crop.
  Image d_padded_out(channels, ph, pw);
  parallel_for(static_cast<std::int64_t>(channels) * h, [&](std::int64_t r) {
    const int c = static_cast<int>(r / h);
    const int y = static_cast<int>(r % h);
    for (int x = 0; x < w; ++x) {
      const double pre = tape.pre_clamp.at(c, y, x);
      d_padded_out.at(c, y, x) =
          (pre >= 0.0 && pre <= 1.0) ? d_out.at(c, y, x) : 0.0;
    }
  });

  // jpeg blocks
  const int blocks_y = ph / dct8::kN;
  const int blocks_x = pw / dct8::kN;
  Image d_padded_in(channels, ph, pw);
  parallel_for(static_cast<std::int64_t>(channels) * blocks_y * blocks_x,
               [&](std::int64_t bi) {
    const int c = static_cast<int>(bi / (blocks_y * blocks_x));
    const int by = static_cast<int>(bi / blocks_x % blocks_y);
    const int bx = static_cast<int>(bi % blocks_x);
    double dB2[64], dY[64], dX[64], dBin[64];
    for (int y = 0; y < dct8::kN; ++y) {
      for (int x = 0; x < dct8::kN; ++x) {
        dB2[y * dct8::kN + x] =
            d_padded_out.at(c, by * dct8::kN + y, bx * dct8::kN + x) / 255.0;
      }
    }
    dct8::forward(dB2, dY);
    for (int i = 0; i < 64; ++i) {
      const int y = by * dct8::kN + i / dct8::kN;
      const int x = bx * dct8::kN + i % dct8::kN;
      const double coeff =
          tape.coeff[(static_cast<std::size_t>(c) * ph + y) * pw + x];
      const double div = tape.divisors[static_cast<std::size_t>(i)];
      const double dR = dY[i] * div;
      const double dC = dR * soft_round_derivative(coeff);
      dX[i] = dC / div;
    }
    dct8::inverse(dX, dBin);
    for (int y = 0; y < dct8::kN; ++y) {
      for (int x = 0; x < dct8::kN; ++x) {
        d_padded_in.at(c, by * dct8::kN + y, bx * dct8::kN + x) =
            255.0 * dBin[y * dct8::kN + x];
      }
    }
  });

  // fold replicated padding back onto the source pixels
  Image d_gamma_out(channels, h, w);
  parallel_for(static_cast<std::int64_t>(channels) * h, [&](std::int64_t r) {
    const int c = static_cast<int>(r / h);
    const int y = static_cast<int>(r % h);
    const bool edge_y = y == h - 1;
    for (int x = 0; x < w; ++x) {
      const bool edge_x = x == w - 1;
      double acc = 0.0;
      const int py_hi = edge_y ? ph : y + 1;
      const int px_hi = edge_x ? pw : x + 1;
      for (int py = y; py < py_hi; ++py) {
        for (int px = x; px < px_hi; ++px) {
          acc += d_padded_in.at(c, py, px);
        }
      }
      d_gamma_out.at(c, y, x) = acc;
    }
  });

  // gamma
  Image d_norm(channels, h, w);
  parallel_for(static_cast<std::int64_t>(d_norm.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    d_norm.data[j] = d_gamma_out.data[j] * gamma_derivative(tape.norm_out.data[j]);
  });

  // normalize
  const double range = tape.mm.max - tape.mm.min;
  Image d_noise(channels, h, w);
  parallel_for(static_cast<std::int64_t>(d_noise.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    d_noise.data[j] = d_norm.data[j] / range;
  });
  const std::int64_t n_elems = static_cast<std::int64_t>(d_norm.size());
  const double sum_d = deterministic_transform_sum(n_elems, [&](std::int64_t i) {
    return d_norm.data[static_cast<std::size_t>(i)];
  });
  const double sum_dn = deterministic_transform_sum(n_elems, [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    return d_norm.data[j] * tape.norm_out.data[j];
  });
  d_noise.data[tape.mm.argmin] += (-sum_d + sum_dn) / range;
  d_noise.data[tape.mm.argmax] += -sum_dn / range;

  // noise
  CameraGrads grads;
  Image d_rgb(channels, h, w);
  parallel_for(n_elems, [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    const double d = d_noise.data[j];
    const double rate = tape.rate[j];
    const double dk = d * tape.mu / tape.nu;
    double drate = dk;
    if (rate > 0.0) drate += dk * tape.eps1[j] / (2.0 * std::sqrt(rate));
    const double dt = rate > 0.0 ? drate : 0.0;
    d_rgb.data[j] = dt * tape.nu;
  });
  grads.d_sigma = deterministic_transform_sum(n_elems, [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    return d_rgb.data[j] * tape.eps0[j];
  });
  grads.d_mu = deterministic_transform_sum(n_elems, [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    const double rate = tape.rate[j];
    const double count = rate + std::sqrt(rate) * tape.eps1[j];
    return d_noise.data[j] * count / tape.nu;
  });
  grads.d_nu = deterministic_transform_sum(n_elems, [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    const double d = d_noise.data[j];
    const double rate = tape.rate[j];
    const double count = rate + std::sqrt(rate) * tape.eps1[j];
    double acc = -d * tape.mu * count / (tape.nu * tape.nu);
    if (rate > 0.0) {
      const double dk = d * tape.mu / tape.nu;
      const double drate = dk * (1.0 + tape.eps1[j] / (2.0 * std::sqrt(rate)));
      const double y = tape.rgb_clean.data[j] + tape.sigma * tape.eps0[j];
      acc += drate * y;
    }
    return acc;
  });

  // projection
  const std::size_t plane = tape.cube.plane();
  grads.d_cube = Image(tape.bands, h, w);
  parallel_for(static_cast<std::int64_t>(plane), [&](std::int64_t p) {
    const std::size_t pi = static_cast<std::size_t>(p);
    for (int b = 0; b < tape.bands; ++b) {
      double acc = 0.0;
      for (int c = 0; c < kRgbChannels; ++c) {
        acc += tape.eff[static_cast<std::size_t>(c) * tape.bands + b] *
               d_rgb.data[static_cast<std::size_t>(c) * plane + pi];
      }
      grads.d_cube.data[static_cast<std::size_t>(b) * plane + pi] = acc;
    }
  });
  grads.d_displacement.assign(static_cast<std::size_t>(tape.bands), 0.0);
  for (int b = 0; b < tape.bands; ++b) {
    double acc = 0.0;
    for (int c = 0; c < kRgbChannels; ++c) {
      if (tape.eff_active[static_cast<std::size_t>(c) * tape.bands + b] == 0) {
        continue;
      }
      acc += deterministic_transform_sum(
          static_cast<std::int64_t>(plane), [&](std::int64_t p) {
            const std::size_t pi = static_cast<std::size_t>(p);
            return d_rgb.data[static_cast<std::size_t>(c) * plane + pi] *
                   tape.cube.data[static_cast<std::size_t>(b) * plane + pi];
          });
    }
    grads.d_displacement[static_cast<std::size_t>(b)] = acc;
  }
  return grads;
}

}  // namespace spectra
