#include "spectra/recovery.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "spectra/metrics.h"
#include "spectra/parallel.h"

namespace spectra {

namespace {

double stable_softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void glorot_init(std::span<double> w, int fan_in, int fan_out, rng::Key k) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = (2.0 * rng::uniform(k, i) - 1.0) * a;
  }
}

int clamp_coord(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

}  // namespace

Pipeline make_pipeline(const TrainConfig& cfg, const ResponseMatrix& standard) {
  if (standard.bands != kBands) {
    throw ShapeError("pipeline: standard curves must cover the 31-band grid");
  }
  validate_response(standard);
  if (cfg.hidden < 1) throw ValueError("pipeline: hidden width must be >= 1");
  if (!(cfg.sigma_init >= 0.0) || !(cfg.nu_init > 0.0) ||
      !(cfg.mu_init > 0.0)) {
    throw ValueError("pipeline: invalid camera initialization");
  }
  if (cfg.jpeg_quality < 1 || cfg.jpeg_quality > 100) {
    throw ValueError("pipeline: jpeg_quality must be in [1, 100]");
  }

  Pipeline pipe;
  pipe.hidden = cfg.hidden;
  pipe.base_curves = standard.base;

  const int hid = cfg.hidden;
  auto& ps = pipe.params;
  ps.add("trunk.w1", static_cast<std::size_t>(hid) * Pipeline::kPatchInputs);
  ps.add("trunk.b1", static_cast<std::size_t>(hid));
  ps.add("trunk.w2", static_cast<std::size_t>(hid) * hid);
  ps.add("trunk.b2", static_cast<std::size_t>(hid));
  ps.add("trunk.w3", static_cast<std::size_t>(kBands) * hid);
  ps.add("trunk.b3", static_cast<std::size_t>(kBands));
  ps.add("aux.w", static_cast<std::size_t>(Pipeline::kAuxOutputs) * hid);
  ps.add("aux.b", static_cast<std::size_t>(Pipeline::kAuxOutputs));
  for (const char* prefix : {"cam_s", "cam_m"}) {
    const std::string p(prefix);
    ps.add(p + ".delta", static_cast<std::size_t>(kBands));
    ps.add(p + ".sigma", 1);
    ps.add(p + ".log_nu", 1);
    ps.add(p + ".log_mu", 1);
    ps.add(p + ".quality", 1);
  }
  ps.add("disc.w", static_cast<std::size_t>(hid));
  ps.add("disc.b", 1);

  const rng::Key ik = rng::fork(rng::key(cfg.seed), 0x1223);
  glorot_init(ps.view("trunk.w1"), Pipeline::kPatchInputs, hid,
              rng::fork(ik, 0));
  glorot_init(ps.view("trunk.w2"), hid, hid, rng::fork(ik, 1));
  glorot_init(ps.view("trunk.w3"), hid, kBands, rng::fork(ik, 2));
  // aux head starts at zero so displacements and camera offsets begin at
  // their stationary point; its rows differentiate through the gradient
  for (double& v : ps.view("aux.w")) v = 0.0;
  for (const char* prefix : {"cam_s", "cam_m"}) {
    const std::string p(prefix);
    ps.view(p + ".sigma")[0] = cfg.sigma_init;
    ps.view(p + ".log_nu")[0] = std::log(cfg.nu_init);
    ps.view(p + ".log_mu")[0] = std::log(cfg.mu_init);
    ps.view(p + ".quality")[0] = static_cast<double>(cfg.jpeg_quality);
  }
  return pipe;
}

Pipeline pipeline_from_checkpoint(const std::string& path,
                                  const ResponseMatrix& standard) {
  ParamStore ps = load_checkpoint(path);
  if (!ps.has("trunk.b1")) {
    throw FormatError("checkpoint lacks recovery parameters: " + path);
  }
  const int hid = static_cast<int>(ps.slice("trunk.b1").length);
  const auto expect = [&](const std::string& name, std::size_t len) {
    if (!ps.has(name) || ps.slice(name).length != len) {
      throw FormatError("checkpoint slice " + name + " has unexpected size");
    }
  };
  expect("trunk.w1", static_cast<std::size_t>(hid) * Pipeline::kPatchInputs);
  expect("trunk.w2", static_cast<std::size_t>(hid) * hid);
  expect("trunk.b2", static_cast<std::size_t>(hid));
  expect("trunk.w3", static_cast<std::size_t>(kBands) * hid);
  expect("trunk.b3", static_cast<std::size_t>(kBands));
  expect("aux.w", static_cast<std::size_t>(Pipeline::kAuxOutputs) * hid);
  expect("aux.b", static_cast<std::size_t>(Pipeline::kAuxOutputs));
  for (const char* prefix : {"cam_s", "cam_m"}) {
    const std::string p(prefix);
    expect(p + ".delta", static_cast<std::size_t>(kBands));
    expect(p + ".sigma", 1);
    expect(p + ".log_nu", 1);
    expect(p + ".log_mu", 1);
    expect(p + ".quality", 1);
  }
  expect("disc.w", static_cast<std::size_t>(hid));
  expect("disc.b", 1);

  if (standard.bands != kBands) {
    throw ShapeError("pipeline: standard curves must cover the 31-band grid");
  }
  Pipeline pipe;
  pipe.hidden = hid;
  pipe.base_curves = standard.base;
  pipe.params = std::move(ps);
  return pipe;
}

// ---- recovery network ----

Image recover_forward(const Pipeline& pipe, const Image& rgb,
                      RecoverTape* tape) {
  require_channels(rgb, kRgbChannels, "recover");
  for (double v : rgb.data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValueError("recover: input outside [0, 1]");
    }
  }
  const int h = rgb.height, w = rgb.width, hid = pipe.hidden;
  const std::int64_t npx = static_cast<std::int64_t>(h) * w;
  const auto w1 = pipe.params.view("trunk.w1");
  const auto b1 = pipe.params.view("trunk.b1");
  const auto w2 = pipe.params.view("trunk.w2");
  const auto b2 = pipe.params.view("trunk.b2");
  const auto w3 = pipe.params.view("trunk.w3");
  const auto b3 = pipe.params.view("trunk.b3");

  RecoverTape scratch;
  RecoverTape& t = tape != nullptr ? *tape : scratch;
  t.input = rgb;
  t.patch.assign(static_cast<std::size_t>(npx) * Pipeline::kPatchInputs, 0.0);
  t.z1.assign(static_cast<std::size_t>(npx) * hid, 0.0);
  t.z2.assign(static_cast<std::size_t>(npx) * hid, 0.0);
  t.s.assign(static_cast<std::size_t>(npx) * kBands, 0.0);

  Image cube(kBands, h, w);
  parallel_for(npx, [&](std::int64_t p) {
    const int y = static_cast<int>(p / w);
    const int x = static_cast<int>(p % w);
    double* patch = t.patch.data() + static_cast<std::size_t>(p) * Pipeline::kPatchInputs;
    for (int c = 0; c < kRgbChannels; ++c) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          patch[c * 9 + (dy + 1) * 3 + (dx + 1)] =
              rgb.at(c, clamp_coord(y + dy, h), clamp_coord(x + dx, w));
        }
      }
    }
    double* z1 = t.z1.data() + static_cast<std::size_t>(p) * hid;
    for (int i = 0; i < hid; ++i) {
      const double* row = w1.data() + static_cast<std::size_t>(i) * Pipeline::kPatchInputs;
      double acc = b1[static_cast<std::size_t>(i)];
      for (int j = 0; j < Pipeline::kPatchInputs; ++j) acc += row[j] * patch[j];
      z1[i] = acc > 0.0 ? acc : 0.0;
    }
    double* z2 = t.z2.data() + static_cast<std::size_t>(p) * hid;
    for (int i = 0; i < hid; ++i) {
      const double* row = w2.data() + static_cast<std::size_t>(i) * hid;
      double acc = b2[static_cast<std::size_t>(i)];
      for (int j = 0; j < hid; ++j) acc += row[j] * z1[j];
      z2[i] = acc > 0.0 ? acc : 0.0;
    }
    double* s = t.s.data() + static_cast<std::size_t>(p) * kBands;
    for (int band = 0; band < kBands; ++band) {
      const double* row = w3.data() + static_cast<std::size_t>(band) * hid;
      double acc = b3[static_cast<std::size_t>(band)];
      for (int j = 0; j < hid; ++j) acc += row[j] * z2[j];
      s[band] = acc;
      cube.data[static_cast<std::size_t>(band) * cube.plane() + static_cast<std::size_t>(p)] =
          stable_softplus(acc);
    }
  });

  // pooled features feed the aux head and the domain discriminator
  t.pooled.assign(static_cast<std::size_t>(hid), 0.0);
  deterministic_accumulate(
      npx, 256, static_cast<std::size_t>(hid),
      [&](std::int64_t p, std::span<double> buf) {
        const double* z2 = t.z2.data() + static_cast<std::size_t>(p) * hid;
        for (int j = 0; j < hid; ++j) buf[static_cast<std::size_t>(j)] += z2[j];
      },
      t.pooled);
  for (double& v : t.pooled) v /= static_cast<double>(npx);

  const auto aw = pipe.params.view("aux.w");
  const auto ab = pipe.params.view("aux.b");
  t.aux.assign(static_cast<std::size_t>(Pipeline::kAuxOutputs), 0.0);
  for (int k = 0; k < Pipeline::kAuxOutputs; ++k) {
    double acc = ab[static_cast<std::size_t>(k)];
    for (int j = 0; j < hid; ++j) {
      acc += aw[static_cast<std::size_t>(k) * hid + j] * t.pooled[static_cast<std::size_t>(j)];
    }
    t.aux[static_cast<std::size_t>(k)] = acc;
  }
  return cube;
}

Image recover(const Pipeline& pipe, const Image& rgb) {
  return recover_forward(pipe, rgb, nullptr);
}

void recover_backward(Pipeline& pipe, const RecoverTape& tape,
                      const Image* d_out, std::span<const double> d_aux,
                      std::span<const double> d_pooled, Image* d_input) {
  const int h = tape.input.height, w = tape.input.width, hid = pipe.hidden;
  const std::int64_t npx = static_cast<std::int64_t>(h) * w;
  const auto w1 = pipe.params.view("trunk.w1");
  const auto w2 = pipe.params.view("trunk.w2");
  const auto w3 = pipe.params.view("trunk.w3");

  std::vector<double> dpool(static_cast<std::size_t>(hid), 0.0);
  if (!d_pooled.empty()) {
    for (int j = 0; j < hid; ++j) dpool[static_cast<std::size_t>(j)] = d_pooled[static_cast<std::size_t>(j)];
  }
  if (!d_aux.empty()) {
    const auto aw = pipe.params.view("aux.w");
    auto gaw = pipe.params.grad_view("aux.w");
    auto gab = pipe.params.grad_view("aux.b");
    for (int k = 0; k < Pipeline::kAuxOutputs; ++k) {
      const double dk = d_aux[static_cast<std::size_t>(k)];
      if (dk == 0.0) continue;
      gab[static_cast<std::size_t>(k)] += dk;
      for (int j = 0; j < hid; ++j) {
        gaw[static_cast<std::size_t>(k) * hid + j] += dk * tape.pooled[static_cast<std::size_t>(j)];
        dpool[static_cast<std::size_t>(j)] += dk * aw[static_cast<std::size_t>(k) * hid + j];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(npx);

  // trunk slices sit at the front of the store; accumulate into fixed-block
  // buffers covering that contiguous region
  const auto b3_slice = pipe.params.slice("trunk.b3");
  const std::size_t trunk_len = b3_slice.offset + b3_slice.length;
  const std::size_t off_w1 = pipe.params.slice("trunk.w1").offset;
  const std::size_t off_b1 = pipe.params.slice("trunk.b1").offset;
  const std::size_t off_w2 = pipe.params.slice("trunk.w2").offset;
  const std::size_t off_b2 = pipe.params.slice("trunk.b2").offset;
  const std::size_t off_w3 = pipe.params.slice("trunk.w3").offset;
  const std::size_t off_b3 = b3_slice.offset;

  std::vector<double> dpatch;
  if (d_input != nullptr) {
    dpatch.assign(static_cast<std::size_t>(npx) * Pipeline::kPatchInputs, 0.0);
  }

  constexpr std::int64_t kPixelBlock = 256;
  const std::int64_t nb = (npx + kPixelBlock - 1) / kPixelBlock;
  std::vector<double> buf(static_cast<std::size_t>(nb) * trunk_len, 0.0);
  parallel_for(nb, [&](std::int64_t blk) {
    double* g = buf.data() + static_cast<std::size_t>(blk) * trunk_len;
    std::vector<double> ds(static_cast<std::size_t>(kBands));
    std::vector<double> dz2(static_cast<std::size_t>(hid));
    std::vector<double> dz1(static_cast<std::size_t>(hid));
    const std::int64_t lo = blk * kPixelBlock;
    const std::int64_t hi = std::min(lo + kPixelBlock, npx);
    for (std::int64_t p = lo; p < hi; ++p) {
      const double* z1 = tape.z1.data() + static_cast<std::size_t>(p) * hid;
      const double* z2 = tape.z2.data() + static_cast<std::size_t>(p) * hid;
      const double* s = tape.s.data() + static_cast<std::size_t>(p) * kBands;
      const double* patch = tape.patch.data() + static_cast<std::size_t>(p) * Pipeline::kPatchInputs;
      for (int band = 0; band < kBands; ++band) {
        const double up =
            d_out != nullptr
                ? d_out->data[static_cast<std::size_t>(band) * d_out->plane() + static_cast<std::size_t>(p)]
                : 0.0;
        ds[static_cast<std::size_t>(band)] = up * sigmoid(s[band]);
      }
      for (int i = 0; i < hid; ++i) {
        double acc = dpool[static_cast<std::size_t>(i)] * inv_n;
        for (int band = 0; band < kBands; ++band) {
          acc += w3[static_cast<std::size_t>(band) * hid + i] * ds[static_cast<std::size_t>(band)];
        }
        dz2[static_cast<std::size_t>(i)] = z2[i] > 0.0 ? acc : 0.0;
      }
      for (int j = 0; j < hid; ++j) {
        double acc = 0.0;
        for (int i = 0; i < hid; ++i) {
          acc += w2[static_cast<std::size_t>(i) * hid + j] * dz2[static_cast<std::size_t>(i)];
        }
        dz1[static_cast<std::size_t>(j)] = z1[j] > 0.0 ? acc : 0.0;
      }
      for (int band = 0; band < kBands; ++band) {
        const double d = ds[static_cast<std::size_t>(band)];
        if (d == 0.0) continue;
        g[off_b3 + static_cast<std::size_t>(band)] += d;
        double* row = g + off_w3 + static_cast<std::size_t>(band) * hid;
        for (int j = 0; j < hid; ++j) row[j] += d * z2[j];
      }
      for (int i = 0; i < hid; ++i) {
        const double d = dz2[static_cast<std::size_t>(i)];
        if (d == 0.0) continue;
        g[off_b2 + static_cast<std::size_t>(i)] += d;
        double* row = g + off_w2 + static_cast<std::size_t>(i) * hid;
        for (int j = 0; j < hid; ++j) row[j] += d * z1[j];
      }
      for (int i = 0; i < hid; ++i) {
        const double d = dz1[static_cast<std::size_t>(i)];
        if (d == 0.0) continue;
        g[off_b1 + static_cast<std::size_t>(i)] += d;
        double* row = g + off_w1 + static_cast<std::size_t>(i) * Pipeline::kPatchInputs;
        for (int j = 0; j < Pipeline::kPatchInputs; ++j) row[j] += d * patch[j];
      }
      if (d_input != nullptr) {
        double* dp = dpatch.data() + static_cast<std::size_t>(p) * Pipeline::kPatchInputs;
        for (int j = 0; j < Pipeline::kPatchInputs; ++j) {
          double acc = 0.0;
          for (int i = 0; i < hid; ++i) {
            acc += w1[static_cast<std::size_t>(i) * Pipeline::kPatchInputs + j] * dz1[static_cast<std::size_t>(i)];
          }
          dp[j] = acc;
        }
      }
    }
  });
  for (std::int64_t blk = 0; blk < nb; ++blk) {
    const double* g = buf.data() + static_cast<std::size_t>(blk) * trunk_len;
    for (std::size_t j = 0; j < trunk_len; ++j) pipe.params.grad[j] += g[j];
  }

  if (d_input != nullptr) {
    *d_input = Image(kRgbChannels, h, w);
    parallel_for(npx, [&](std::int64_t p) {
      const int y = static_cast<int>(p / w);
      const int x = static_cast<int>(p % w);
      for (int c = 0; c < kRgbChannels; ++c) {
        double acc = 0.0;
        for (int qy = y - 1; qy <= y + 1; ++qy) {
          if (qy < 0 || qy >= h) continue;
          for (int qx = x - 1; qx <= x + 1; ++qx) {
            if (qx < 0 || qx >= w) continue;
            const double* dp = dpatch.data() +
                (static_cast<std::size_t>(qy) * w + qx) * Pipeline::kPatchInputs;
            for (int dy = -1; dy <= 1; ++dy) {
              if (clamp_coord(qy + dy, h) != y) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                if (clamp_coord(qx + dx, w) != x) continue;
                acc += dp[c * 9 + (dy + 1) * 3 + (dx + 1)];
              }
            }
          }
        }
        d_input->at(c, y, x) = acc;
      }
    });
  }
}

// ---- effective camera ----

EffectiveCamera effective_camera(const Pipeline& pipe,
                                 const std::string& prefix,
                                 const std::vector<double>* aux) {
  if (aux != nullptr &&
      aux->size() != static_cast<std::size_t>(Pipeline::kAuxOutputs)) {
    throw ShapeError("effective_camera: aux head must emit 31+3 values");
  }
  EffectiveCamera cam;
  cam.has_aux = aux != nullptr;
  cam.rm = ResponseMatrix(kBands);
  cam.rm.base = pipe.base_curves;
  const auto delta = pipe.params.view(prefix + ".delta");
  for (int b = 0; b < kBands; ++b) {
    cam.rm.displacement[static_cast<std::size_t>(b)] =
        delta[static_cast<std::size_t>(b)] +
        (aux != nullptr ? (*aux)[static_cast<std::size_t>(b)] : 0.0);
  }
  cam.sigma_pre = pipe.params.view(prefix + ".sigma")[0] +
                  (aux != nullptr ? (*aux)[kBands] : 0.0);
  cam.sigma = cam.sigma_pre > 0.0 ? cam.sigma_pre : 0.0;
  cam.nu = std::exp(pipe.params.view(prefix + ".log_nu")[0] +
                    (aux != nullptr ? (*aux)[kBands + 1] : 0.0));
  cam.mu = std::exp(pipe.params.view(prefix + ".log_mu")[0] +
                    (aux != nullptr ? (*aux)[kBands + 2] : 0.0));
  cam.quality = static_cast<int>(
      std::llround(pipe.params.view(prefix + ".quality")[0]));
  return cam;
}

CameraParams camera_params(const EffectiveCamera& cam, CameraMode mode) {
  CameraParams p;
  p.sigma = cam.sigma;
  p.nu = cam.nu;
  p.mu = cam.mu;
  p.jpeg_quality = cam.quality;
  p.mode = mode;
  return p;
}

// ---- keys ----

StepKeys sample_keys(std::uint64_t seed, std::uint64_t spectral_index,
                     std::uint64_t material_index) {
  const rng::Key k0 = rng::key(seed);
  StepKeys keys;
  keys.cam_m = rng::fork(rng::fork(rng::fork(k0, 2), material_index), 0);
  keys.cam_s_hat = rng::fork(rng::fork(rng::fork(k0, 3), spectral_index), 1);
  keys.cam_s_true = rng::fork(rng::fork(rng::fork(k0, 3), spectral_index), 2);
  return keys;
}

rng::Key material_camera_key(std::uint64_t seed, std::uint64_t index) {
  return rng::fork(rng::fork(rng::fork(rng::key(seed), 2), index), 0);
}

// ---- losses ----

double combine_total(const LossBreakdown& terms, const TrainConfig& cfg) {
  return cfg.w_band * terms.band + cfg.w_rgb * terms.rgb +
         cfg.w_spectral * terms.spectral + cfg.w_domain * terms.domain;
}

namespace {

Image mse_backward(const Image& ref, const Image& est, double weight) {
  Image d(est.channels, est.height, est.width);
  const double scale = weight * 2.0 / static_cast<double>(est.size());
  parallel_for(static_cast<std::int64_t>(est.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    d.data[j] = scale * (est.data[j] - ref.data[j]);
  });
  return d;
}

void mse_backward_into(const Image& ref, const Image& est, double weight,
                       Image& d) {
  const double scale = weight * 2.0 / static_cast<double>(est.size());
  parallel_for(static_cast<std::int64_t>(est.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    d.data[j] += scale * (est.data[j] - ref.data[j]);
  });
}

Image mrae_backward(const Image& truth, const Image& est, double epsilon,
                    double weight) {
  Image d(est.channels, est.height, est.width);
  const double scale = weight / static_cast<double>(est.size());
  parallel_for(static_cast<std::int64_t>(est.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    const double diff = est.data[j] - truth.data[j];
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    d.data[j] = scale * sign / std::max(truth.data[j], epsilon);
  });
  return d;
}

void add_image(Image& dst, const Image& src) {
  parallel_for(static_cast<std::int64_t>(dst.size()), [&](std::int64_t i) {
    const std::size_t j = static_cast<std::size_t>(i);
    dst.data[j] += src.data[j];
  });
}

// Splits gradients w.r.t. a pass's effective camera into the domain's
// trainable block, and into the aux outputs when the pass carried them.
// mu has no gradient path: the normalized pipeline pins it to 1.
void route_camera_grads(Pipeline& pipe, const std::string& prefix,
                        const EffectiveCamera& cam, const CameraGrads& g,
                        std::span<double> d_aux) {
  auto gd = pipe.params.grad_view(prefix + ".delta");
  for (int b = 0; b < kBands; ++b) {
    const double v = g.d_displacement[static_cast<std::size_t>(b)];
    gd[static_cast<std::size_t>(b)] += v;
    if (!d_aux.empty()) d_aux[static_cast<std::size_t>(b)] += v;
  }
  if (cam.sigma_pre > 0.0) {
    pipe.params.grad_view(prefix + ".sigma")[0] += g.d_sigma;
    if (!d_aux.empty()) d_aux[kBands] += g.d_sigma;
  }
  const double d_log_nu = g.d_nu * cam.nu;
  pipe.params.grad_view(prefix + ".log_nu")[0] += d_log_nu;
  if (!d_aux.empty()) d_aux[kBands + 1] += d_log_nu;
}

void route_displacement_grads(Pipeline& pipe, const std::string& prefix,
                              std::span<const double> d_disp,
                              std::span<double> d_aux) {
  auto gd = pipe.params.grad_view(prefix + ".delta");
  for (int b = 0; b < kBands; ++b) {
    gd[static_cast<std::size_t>(b)] += d_disp[static_cast<std::size_t>(b)];
    if (!d_aux.empty()) d_aux[static_cast<std::size_t>(b)] += d_disp[static_cast<std::size_t>(b)];
  }
}

void validate_sample(const StepSample& sample) {
  if (sample.x_s == nullptr || sample.h_s == nullptr ||
      sample.x_m == nullptr) {
    throw ValueError("loss: sample must provide x_s, h_s and x_m");
  }
  require_channels(*sample.x_s, kRgbChannels, "loss x_s");
  require_channels(*sample.x_m, kRgbChannels, "loss x_m");
  require_channels(*sample.h_s, kBands, "loss h_s");
  if (sample.h_s->height != sample.x_s->height ||
      sample.h_s->width != sample.x_s->width) {
    throw ShapeError("loss: spectral pair has mismatched spatial size");
  }
}

}  // namespace

LossBreakdown compute_losses(Pipeline& pipe, const StepSample& sample,
                             const TrainConfig& cfg, const StepKeys& keys,
                             bool with_grad, bool reverse_domain,
                             double grad_scale, bool band_subgradient) {
  validate_sample(sample);
  const double eps = cfg.mrae_epsilon;

  // material pass: x_m -> S -> R_m, cycle back to x_m
  RecoverTape tape_m;
  Image hhat_m = recover_forward(pipe, *sample.x_m, &tape_m);
  const EffectiveCamera cam_m = effective_camera(pipe, "cam_m", &tape_m.aux);
  CameraTape ct_m;
  Image xhat_m = camera_forward_diff(
      hhat_m, cam_m.rm, camera_params(cam_m, CameraMode::kDifferentiable),
      keys.cam_m, ct_m);
  const double l_trans = mse(*sample.x_m, xhat_m);

  // spectral pass: x_s -> S -> R_s
  RecoverTape tape_s;
  Image hhat_s = recover_forward(pipe, *sample.x_s, &tape_s);
  const EffectiveCamera cam_s = effective_camera(pipe, "cam_s", &tape_s.aux);
  CameraTape ct_s1;
  Image xhat_s = camera_forward_diff(
      hhat_s, cam_s.rm, camera_params(cam_s, CameraMode::kDifferentiable),
      keys.cam_s_hat, ct_s1);
  const double l_rgb_hat = mse(*sample.x_s, xhat_s);

  // measured cube through the spectral camera (no aux: nothing drove S)
  const EffectiveCamera cam_s0 = effective_camera(pipe, "cam_s", nullptr);
  CameraTape ct_s2;
  Image x_rs = camera_forward_diff(
      *sample.h_s, cam_s0.rm, camera_params(cam_s0, CameraMode::kDifferentiable),
      keys.cam_s_true, ct_s2);
  const double l_rgb_true = mse(*sample.x_s, x_rs);

  const double l_sp_direct = mrae(*sample.h_s, hhat_s, eps);
  RecoverTape tape_c;
  Image hhat_cycle = recover_forward(pipe, x_rs, &tape_c);
  const double l_sp_cycle = mrae(*sample.h_s, hhat_cycle, eps);

  // sensitivity-weighted penalty on the trainable displacement vectors
  const EffectiveCamera cam_m0 = effective_camera(pipe, "cam_m", nullptr);
  const double l_band = band_loss(cam_s0.rm) + band_loss(cam_m0.rm);

  DomainTape dtape;
  const auto disc_w = pipe.params.view("disc.w");
  const double l_domain = domain_loss(disc_w, pipe.params.view("disc.b")[0],
                                      tape_s.pooled, tape_m.pooled, &dtape);

  LossBreakdown out;
  out.band = l_band;
  out.rgb = l_trans + l_rgb_hat + l_rgb_true;
  out.spectral = l_sp_direct + l_sp_cycle;
  out.domain = l_domain;
  out.trans = l_trans;
  out.total = combine_total(out, cfg);
  if (!with_grad) return out;

  const double gs = grad_scale;
  const int hid = pipe.hidden;

  std::vector<double> d_pool_s(static_cast<std::size_t>(hid), 0.0);
  std::vector<double> d_pool_m(static_cast<std::size_t>(hid), 0.0);
  double& d_disc_b = pipe.params.grad_view("disc.b")[0];
  domain_loss_backward(dtape, disc_w, cfg.w_domain * gs, reverse_domain,
                       pipe.params.grad_view("disc.w"), d_disc_b, d_pool_s,
                       d_pool_m);

  if (band_subgradient) {
    std::vector<double> d_disp_s(static_cast<std::size_t>(kBands), 0.0);
    std::vector<double> d_disp_m(static_cast<std::size_t>(kBands), 0.0);
    band_loss_backward(cam_s0.rm, cfg.w_band * gs, d_disp_s);
    band_loss_backward(cam_m0.rm, cfg.w_band * gs, d_disp_m);
    route_displacement_grads(pipe, "cam_s", d_disp_s, {});
    route_displacement_grads(pipe, "cam_m", d_disp_m, {});
  }

  // spectral cycle term -> recover on x_rs -> gradient w.r.t. x_rs
  Image d_hhat_cycle =
      mrae_backward(*sample.h_s, hhat_cycle, eps, cfg.w_spectral * gs);
  Image d_xrs;
  recover_backward(pipe, tape_c, &d_hhat_cycle, {}, {}, &d_xrs);
  mse_backward_into(*sample.x_s, x_rs, cfg.w_rgb * gs, d_xrs);

  std::vector<double> d_aux_s(static_cast<std::size_t>(Pipeline::kAuxOutputs), 0.0);
  const CameraGrads g_s2 = camera_backward(ct_s2, d_xrs);
  route_camera_grads(pipe, "cam_s", cam_s0, g_s2, {});  // d_cube lands on data

  Image d_xhat_s = mse_backward(*sample.x_s, xhat_s, cfg.w_rgb * gs);
  const CameraGrads g_s1 = camera_backward(ct_s1, d_xhat_s);
  route_camera_grads(pipe, "cam_s", cam_s, g_s1, d_aux_s);

  Image d_hhat_s = mrae_backward(*sample.h_s, hhat_s, eps, cfg.w_spectral * gs);
  add_image(d_hhat_s, g_s1.d_cube);
  recover_backward(pipe, tape_s, &d_hhat_s, d_aux_s, d_pool_s, nullptr);

  std::vector<double> d_aux_m(static_cast<std::size_t>(Pipeline::kAuxOutputs), 0.0);
  Image d_xhat_m = mse_backward(*sample.x_m, xhat_m, cfg.w_rgb * gs);
  const CameraGrads g_m = camera_backward(ct_m, d_xhat_m);
  route_camera_grads(pipe, "cam_m", cam_m, g_m, d_aux_m);
  recover_backward(pipe, tape_m, &g_m.d_cube, d_aux_m, d_pool_m, nullptr);

  return out;
}

double loss_trans(Pipeline& pipe, const Image& x_m, rng::Key key) {
  RecoverTape tape;
  Image hhat = recover_forward(pipe, x_m, &tape);
  const EffectiveCamera cam = effective_camera(pipe, "cam_m", &tape.aux);
  Image xhat = camera_forward(
      hhat, cam.rm, camera_params(cam, CameraMode::kDifferentiable), key);
  return mse(x_m, xhat);
}

double loss_rgb(Pipeline& pipe, const Image& x_s, const Image& h_s,
                const Image& x_m, const StepKeys& keys) {
  const double l_trans = loss_trans(pipe, x_m, keys.cam_m);
  RecoverTape tape;
  Image hhat_s = recover_forward(pipe, x_s, &tape);
  const EffectiveCamera cam_s = effective_camera(pipe, "cam_s", &tape.aux);
  Image xhat_s = camera_forward(
      hhat_s, cam_s.rm, camera_params(cam_s, CameraMode::kDifferentiable),
      keys.cam_s_hat);
  const EffectiveCamera cam_s0 = effective_camera(pipe, "cam_s", nullptr);
  Image x_rs = camera_forward(
      h_s, cam_s0.rm, camera_params(cam_s0, CameraMode::kDifferentiable),
      keys.cam_s_true);
  return l_trans + mse(x_s, xhat_s) + mse(x_s, x_rs);
}

double loss_spectral(Pipeline& pipe, const Image& h_s, const Image& x_s,
                     rng::Key cam_key, double epsilon) {
  Image hhat_s = recover(pipe, x_s);
  const EffectiveCamera cam_s0 = effective_camera(pipe, "cam_s", nullptr);
  Image x_rs = camera_forward(
      h_s, cam_s0.rm, camera_params(cam_s0, CameraMode::kDifferentiable),
      cam_key);
  Image hhat_cycle = recover(pipe, x_rs);
  return mrae(h_s, hhat_s, epsilon) + mrae(h_s, hhat_cycle, epsilon);
}

// ---- training ----

namespace {

void check_finite(const LossBreakdown& lb, int step) {
  const struct {
    const char* name;
    double value;
  } terms[] = {{"band", lb.band},
               {"rgb", lb.rgb},
               {"spectral", lb.spectral},
               {"domain", lb.domain},
               {"total", lb.total}};
  for (const auto& t : terms) {
    if (!std::isfinite(t.value)) {
      throw NumericError("loss_" + std::string(t.name) +
                         " is not finite at step " + std::to_string(step));
    }
  }
}

}  // namespace

TrainResult train(Pipeline& pipe, std::span<const SpectralPair> spectral,
                  std::span<const Image> material, const TrainConfig& cfg) {
  if (spectral.empty() || material.empty()) {
    throw ValueError("train: both datasets must be non-empty");
  }
  if (cfg.steps < 0) throw ValueError("train: steps must be >= 0");
  if (cfg.batch_size < 1) throw ValueError("train: batch_size must be >= 1");

  TrainResult res;
  std::vector<double> velocity(pipe.params.values.size(), 0.0);
  std::vector<double> best_values = pipe.params.values;
  const rng::Key sel = rng::fork(rng::key(cfg.seed), 0xBA7C4);

  for (int step = 0; step < cfg.steps; ++step) {
    pipe.params.zero_grad();
    LossBreakdown avg;
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    for (int item = 0; item < cfg.batch_size; ++item) {
      const std::uint64_t draw =
          static_cast<std::uint64_t>(step) * cfg.batch_size + item;
      const std::uint64_t is = rng::uniform_index(sel, 2 * draw, spectral.size());
      const std::uint64_t im =
          rng::uniform_index(sel, 2 * draw + 1, material.size());
      const StepSample smp{&spectral[is].rgb, &spectral[is].cube,
                           &material[im]};
      const StepKeys keys = sample_keys(cfg.seed, is, im);
      const LossBreakdown lb = compute_losses(pipe, smp, cfg, keys, true,
                                              true, inv_b,
                                              /*band_subgradient=*/false);
      avg.band += lb.band * inv_b;
      avg.rgb += lb.rgb * inv_b;
      avg.spectral += lb.spectral * inv_b;
      avg.domain += lb.domain * inv_b;
      avg.trans += lb.trans * inv_b;
      avg.total += lb.total * inv_b;
    }
    check_finite(avg, step);
    res.trace.push_back({step, avg});
    if (avg.trans < res.best_trans) {
      res.best_trans = avg.trans;
      res.best_step = step;
      best_values = pipe.params.values;  // snapshot before this update
    }
    for (std::size_t i = 0; i < velocity.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] -
                    cfg.learning_rate * pipe.params.grad[i];
      pipe.params.values[i] += velocity[i];
    }
    // proximal step for the L1 band penalty: soft-threshold each
    // displacement by lr * w_band * (summed channel sensitivity), pinning
    // displacements to zero until the data gradient outweighs the penalty
    for (const char* prefix : {"cam_s", "cam_m"}) {
      auto delta = pipe.params.view(std::string(prefix) + ".delta");
      for (int b = 0; b < kBands; ++b) {
        double weight = 0.0;
        for (int c = 0; c < kRgbChannels; ++c) {
          weight += pipe.base_curves[static_cast<std::size_t>(c) * kBands + b];
        }
        const double t = cfg.learning_rate * cfg.w_band * weight;
        double& d = delta[static_cast<std::size_t>(b)];
        d = d > t ? d - t : (d < -t ? d + t : 0.0);
      }
    }
  }
  pipe.params.values = best_values;
  return res;
}

// ---- gradient check ----

GradCheckReport grad_check(Pipeline& pipe, const StepSample& sample,
                           const TrainConfig& cfg, int n_params,
                           std::uint64_t seed, double fd_step) {
  validate_sample(sample);
  const StepKeys keys = sample_keys(cfg.seed, 0, 0);

  pipe.params.zero_grad();
  compute_losses(pipe, sample, cfg, keys, true, /*reverse_domain=*/false, 1.0);
  const std::vector<double> analytic = pipe.params.grad;

  // forward state for kink detection
  RecoverTape tape_s, tape_m;
  recover_forward(pipe, *sample.x_s, &tape_s);
  recover_forward(pipe, *sample.x_m, &tape_m);
  const EffectiveCamera cam_s = effective_camera(pipe, "cam_s", &tape_s.aux);
  const EffectiveCamera cam_m = effective_camera(pipe, "cam_m", &tape_m.aux);
  const EffectiveCamera cam_s0 = effective_camera(pipe, "cam_s", nullptr);

  constexpr double kKinkEps = 1e-4;
  const int hid = pipe.hidden;

  const auto disp_kink = [&](const EffectiveCamera& cam, int b) {
    if (std::abs(cam.rm.displacement[static_cast<std::size_t>(b)]) <= kKinkEps) return true;
    for (int c = 0; c < kRgbChannels; ++c) {
      if (std::abs(cam.rm.base_at(c, b) +
                   cam.rm.displacement[static_cast<std::size_t>(b)]) <= kKinkEps) {
        return true;
      }
    }
    return false;
  };

  // name + in-slice offset for a flat index
  const auto locate = [&](std::size_t idx) {
    for (const auto& [name, s] : pipe.params.slices) {
      if (idx >= s.offset && idx < s.offset + s.length) {
        return std::make_pair(name, idx - s.offset);
      }
    }
    return std::make_pair(std::string("?"), std::size_t{0});
  };

  const auto excluded_by_kink = [&](const std::string& slice,
                                    std::size_t off) {
    if (slice == "cam_s.delta") {
      return disp_kink(cam_s, static_cast<int>(off)) ||
             disp_kink(cam_s0, static_cast<int>(off));
    }
    if (slice == "cam_m.delta") return disp_kink(cam_m, static_cast<int>(off));
    if (slice == "cam_s.sigma") {
      return std::abs(cam_s.sigma_pre) <= kKinkEps ||
             std::abs(cam_s0.sigma_pre) <= kKinkEps;
    }
    if (slice == "cam_m.sigma") return std::abs(cam_m.sigma_pre) <= kKinkEps;
    if (slice == "aux.w" || slice == "aux.b") {
      const std::size_t row = slice == "aux.w" ? off / static_cast<std::size_t>(hid) : off;
      if (row < static_cast<std::size_t>(kBands)) {
        return disp_kink(cam_s, static_cast<int>(row)) ||
               disp_kink(cam_m, static_cast<int>(row));
      }
      if (row == static_cast<std::size_t>(kBands)) {
        return std::abs(cam_s.sigma_pre) <= kKinkEps ||
               std::abs(cam_m.sigma_pre) <= kKinkEps;
      }
    }
    return false;
  };

  // candidates: everything except the pinned quality scalars
  std::vector<std::size_t> candidates;
  for (const auto& [name, s] : pipe.params.slices) {
    if (name.ends_with(".quality")) continue;
    for (std::size_t i = 0; i < s.length; ++i) candidates.push_back(s.offset + i);
  }
  // seeded Fisher-Yates, then take the first n_params
  const rng::Key shuffle_key = rng::key(seed);
  for (std::size_t i = candidates.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(
        rng::uniform_index(shuffle_key, i, i));
    std::swap(candidates[i - 1], candidates[j]);
  }
  if (candidates.size() > static_cast<std::size_t>(n_params)) {
    candidates.resize(static_cast<std::size_t>(n_params));
  }

  GradCheckReport report;
  for (const std::size_t idx : candidates) {
    const auto [slice, off] = locate(idx);
    if (excluded_by_kink(slice, off)) {
      report.excluded.push_back(slice + "[" + std::to_string(off) + "]");
      continue;
    }
    const double saved = pipe.params.values[idx];
    pipe.params.values[idx] = saved + fd_step;
    const double lp =
        compute_losses(pipe, sample, cfg, keys, false, false).total;
    pipe.params.values[idx] = saved - fd_step;
    const double lm =
        compute_losses(pipe, sample, cfg, keys, false, false).total;
    pipe.params.values[idx] = saved;
    const double fd = (lp - lm) / (2.0 * fd_step);
    const double a = analytic[idx];
    // denominator floor keeps difference-quotient roundoff from dominating
    // near-zero gradients
    const double rel =
        std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
    report.entries.push_back({idx, slice, a, fd, rel});
    report.max_rel_err = std::max(report.max_rel_err, rel);
    ++report.checked;
  }
  return report;
}

}  // namespace spectra
