#include "spectra/synth.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "spectra/camera.h"
#include "spectra/response.h"
#include "spectra/rng.h"

namespace spectra {

namespace {

constexpr int kBasisCount = 8;
constexpr double kPi = 3.14159265358979323846;

double gaussian(double x, double center, double width) {
  const double t = (x - center) / width;
  return std::exp(-0.5 * t * t);
}

// Shifted curves for the material-domain camera, so the two synthetic
// datasets genuinely come from different sensors.
ResponseMatrix material_camera_curves() {
  ResponseMatrix rm(kBands);
  const double peaks[kRgbChannels] = {590.0, 535.0, 475.0};
  for (int c = 0; c < kRgbChannels; ++c) {
    for (int b = 0; b < kBands; ++b) {
      rm.base_at(c, b) = gaussian(band_wavelength(b), peaks[c], 40.0);
    }
  }
  return rm;
}

}  // namespace

std::vector<double> synth_basis() {
  std::vector<double> basis(static_cast<std::size_t>(kBands) * kBasisCount);
  for (int k = 0; k < kBasisCount; ++k) {
    const double center = 410.0 + 40.0 * k;
    for (int b = 0; b < kBands; ++b) {
      basis[static_cast<std::size_t>(b) * kBasisCount + k] =
          gaussian(band_wavelength(b), center, 35.0);
    }
  }
  return basis;
}

std::vector<double> synth_mixing(std::uint64_t seed) {
  const rng::Key k = rng::fork(rng::key(seed), 0xE8);
  std::vector<double> mix(static_cast<std::size_t>(kBasisCount) * 3);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix[i] = 0.1 + 0.9 * rng::uniform(k, i);
  }
  return mix;
}

std::vector<double> synth_spectrum_matrix(std::uint64_t seed) {
  const std::vector<double> basis = synth_basis();
  const std::vector<double> mix = synth_mixing(seed);
  std::vector<double> m(static_cast<std::size_t>(kBands) * 3, 0.0);
  double max_row = 0.0;
  for (int b = 0; b < kBands; ++b) {
    double row_sum = 0.0;
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kBasisCount; ++k) {
        acc += basis[static_cast<std::size_t>(b) * kBasisCount + k] *
               mix[static_cast<std::size_t>(k) * 3 + c];
      }
      m[static_cast<std::size_t>(b) * 3 + c] = acc;
      row_sum += acc;
    }
    max_row = std::max(max_row, row_sum);
  }
  // scale so a unit-sum direction at full intensity stays near reflectance 1
  const double scale = 0.66 / max_row;
  for (double& v : m) v *= scale;
  return m;
}

std::vector<double> synth_class_direction(std::uint64_t seed, int c,
                                          int classes) {
  if (c < 0 || c >= classes) throw ValueError("synth: class out of range");
  const rng::Key k = rng::fork(rng::fork(rng::key(seed), 0xD1), static_cast<std::uint64_t>(c));
  double dir[3];
  // anchor on rotating corners of the simplex, jittered per seed
  for (int j = 0; j < 3; ++j) {
    const double anchor = (c % 3 == j) ? 1.0 : (c >= 3 && (c + 1) % 3 == j ? 0.6 : 0.12);
    dir[j] = anchor + 0.15 * rng::uniform(k, static_cast<std::uint64_t>(j));
  }
  const double sum = dir[0] + dir[1] + dir[2];
  std::vector<double> out(3);
  for (int j = 0; j < 3; ++j) out[static_cast<std::size_t>(j)] = dir[j] / sum;
  return out;
}

SynthData gen_synth(const SynthConfig& cfg) {
  if (cfg.count < 1 || cfg.size < 8 || cfg.classes < 2 ||
      cfg.classes > 254 || cfg.db_per_class < 1) {
    throw ValueError("gen_synth: invalid configuration");
  }
  if (cfg.unlabeled_fraction < 0.0 || cfg.unlabeled_fraction >= 1.0) {
    throw ValueError("gen_synth: unlabeled_fraction must be in [0, 1)");
  }

  const std::vector<double> m = synth_spectrum_matrix(cfg.seed);
  std::vector<std::vector<double>> dirs;
  for (int c = 0; c < cfg.classes; ++c) {
    dirs.push_back(synth_class_direction(cfg.seed, c, cfg.classes));
  }

  SynthData out;

  // weighting curves for the observation fields
  out.photopic_curve.resize(static_cast<std::size_t>(kBands));
  out.melanopic_curve.resize(static_cast<std::size_t>(kBands));
  for (int b = 0; b < kBands; ++b) {
    out.photopic_curve[static_cast<std::size_t>(b)] =
        gaussian(band_wavelength(b), 555.0, 40.0);
    out.melanopic_curve[static_cast<std::size_t>(b)] =
        gaussian(band_wavelength(b), 490.0, 35.0);
  }

  // spectral db: per class, a few brightness levels of the class mixture
  const rng::Key dbk = rng::fork(rng::key(cfg.seed), 0xDB);
  for (int c = 0; c < cfg.classes; ++c) {
    const rng::Key ck = rng::fork(dbk, static_cast<std::uint64_t>(c));
    const double spec_base = 0.1 + 0.8 * rng::uniform(ck, 0);
    const double rough_base = 0.1 + 0.8 * rng::uniform(ck, 1);
    for (int j = 0; j < cfg.db_per_class; ++j) {
      const double t = 0.8 + 0.4 * (cfg.db_per_class == 1
                                        ? 0.5
                                        : static_cast<double>(j) /
                                              (cfg.db_per_class - 1));
      SpectralDbEntry e;
      e.id = "mat" + std::to_string(c) + "_" + std::to_string(j);
      e.label = c;
      e.spectrum.resize(static_cast<std::size_t>(kBands));
      for (int b = 0; b < kBands; ++b) {
        double acc = 0.0;
        for (int d = 0; d < 3; ++d) {
          acc += m[static_cast<std::size_t>(b) * 3 + d] * dirs[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
        }
        e.spectrum[static_cast<std::size_t>(b)] = acc * t;
      }
      e.photopic = weighted_reflectance(e.spectrum, out.photopic_curve);
      e.melanopic = weighted_reflectance(e.spectrum, out.melanopic_curve);
      e.specularity = std::clamp(
          spec_base + 0.1 * (rng::uniform(ck, 10 + static_cast<std::uint64_t>(j)) - 0.5), 0.0, 1.0);
      e.roughness = std::clamp(
          rough_base + 0.1 * (rng::uniform(ck, 40 + static_cast<std::uint64_t>(j)) - 0.5), 0.0, 1.0);
      out.db.entries.push_back(std::move(e));
    }
  }
  out.db.build_shapes();

  // cameras for the two synthetic domains
  const ResponseMatrix curves_s = synthetic_standard_curves();
  const ResponseMatrix curves_m = material_camera_curves();
  CameraParams cam_s;
  cam_s.sigma = 0.005;
  cam_s.nu = 1e5;
  cam_s.jpeg_quality = 95;
  cam_s.mode = CameraMode::kSample;
  CameraParams cam_m;
  cam_m.sigma = 0.02;
  cam_m.nu = 5e3;
  cam_m.jpeg_quality = 80;
  cam_m.mode = CameraMode::kSample;

  const int n = cfg.size;
  const int n_sites = cfg.classes * 2;
  for (int scene = 0; scene < cfg.count; ++scene) {
    const rng::Key sk = rng::fork(rng::fork(rng::key(cfg.seed), 0x5C), static_cast<std::uint64_t>(scene));
    // Voronoi sites; site index modulo classes fixes the class
    std::vector<double> site_y(static_cast<std::size_t>(n_sites));
    std::vector<double> site_x(static_cast<std::size_t>(n_sites));
    for (int s = 0; s < n_sites; ++s) {
      site_y[static_cast<std::size_t>(s)] = rng::uniform(sk, 2 * static_cast<std::uint64_t>(s)) * n;
      site_x[static_cast<std::size_t>(s)] = rng::uniform(sk, 2 * static_cast<std::uint64_t>(s) + 1) * n;
    }
    // smooth intensity field parameters
    const rng::Key fk = rng::fork(sk, 0xF1);
    const double fy = 1.0 + std::floor(2.0 * rng::uniform(fk, 0));
    const double fx = 1.0 + std::floor(2.0 * rng::uniform(fk, 1));
    const double phase = 2.0 * kPi * rng::uniform(fk, 2);
    const rng::Key jk = rng::fork(sk, 0x77);
    const rng::Key uk = rng::fork(sk, 0xAB);

    SynthScene sc;
    sc.cube = Image(kBands, n, n);
    sc.labels = LabelMap(n, n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const std::uint64_t p = static_cast<std::uint64_t>(y) * n + x;
        int best = 0;
        double best_d = 1e30;
        for (int s = 0; s < n_sites; ++s) {
          const double dy = y + 0.5 - site_y[static_cast<std::size_t>(s)];
          const double dx = x + 0.5 - site_x[static_cast<std::size_t>(s)];
          const double d = dy * dy + dx * dx;
          if (d < best_d) {
            best_d = d;
            best = s;
          }
        }
        const int cls = best % cfg.classes;
        const double wave = std::sin(
            2.0 * kPi * (fy * y / n + fx * x / n) + phase);
        const double t = (1.0 + 0.2 * wave) * (0.9 + 0.2 * rng::uniform(jk, p));
        for (int b = 0; b < kBands; ++b) {
          double acc = 0.0;
          for (int d = 0; d < 3; ++d) {
            acc += m[static_cast<std::size_t>(b) * 3 + d] *
                   dirs[static_cast<std::size_t>(cls)][static_cast<std::size_t>(d)];
          }
          sc.cube.at(b, y, x) = acc * t;
        }
        const bool unlabeled = rng::uniform(uk, p) < cfg.unlabeled_fraction;
        sc.labels.at(y, x) =
            unlabeled ? LabelMap::kUnlabeled : static_cast<std::uint8_t>(cls);
      }
    }
    sc.rgb_s = camera_forward(sc.cube, curves_s, cam_s,
                              rng::fork(rng::fork(sk, 0xCA), 0));
    sc.rgb_m = camera_forward(sc.cube, curves_m, cam_m,
                              rng::fork(rng::fork(sk, 0xCA), 1));
    out.scenes.push_back(std::move(sc));
  }
  return out;
}

}  // namespace spectra
