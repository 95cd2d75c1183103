#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spectra/camera.h"
#include "spectra/domain.h"
#include "spectra/image.h"
#include "spectra/params.h"
#include "spectra/response.h"
#include "spectra/rng.h"

namespace spectra {

struct TrainConfig {
  // published loss weights
  double w_band = 10.0;
  double w_rgb = 5.0;
  double w_spectral = 5.0;
  double w_domain = 0.5;

  double learning_rate = 1e-2;
  double momentum = 0.9;
  int steps = 5000;
  int batch_size = 1;
  std::uint64_t seed = 0;
  double mrae_epsilon = 1e-6;
  int hidden = 64;

  // camera initialization (both domains start identical and diverge in
  // training)
  double sigma_init = 0.01;
  double nu_init = 1e4;
  double mu_init = 1.0;
  int jpeg_quality = 90;
};

// The whole trainable system in one flat parameter store:
//   trunk.*   per-pixel recovery MLP over a 3x3 RGB neighborhood
//   aux.*     head on pooled features -> 31 band displacements + 3 camera
//             scalar offsets (sigma additive, log nu / log mu additive)
//   cam_s.*   spectral-domain camera: displacement, sigma, log_nu, log_mu,
//             quality (held fixed)
//   cam_m.*   material-domain camera, same layout
//   disc.*    domain discriminator (logistic over pooled features)
struct Pipeline {
  int hidden = 64;
  static constexpr int kPatchInputs = 27;
  static constexpr int kAuxOutputs = kBands + 3;

  ParamStore params;
  std::vector<double> base_curves;  // 3 x kBands standard sensitivities
};

Pipeline make_pipeline(const TrainConfig& cfg, const ResponseMatrix& standard);
Pipeline pipeline_from_checkpoint(const std::string& path,
                                  const ResponseMatrix& standard);

// ---- recovery network S(x) ----

struct RecoverTape {
  Image input;
  std::vector<double> patch;   // pixels x 27
  std::vector<double> z1, z2;  // pixels x hidden, post-ReLU
  std::vector<double> s;       // pixels x kBands, pre-softplus
  std::vector<double> pooled;  // hidden
  std::vector<double> aux;     // kAuxOutputs
};

// 31-band non-negative cube from an RGB image in [0,1]; softplus output map.
Image recover(const Pipeline& pipe, const Image& rgb);
Image recover_forward(const Pipeline& pipe, const Image& rgb,
                      RecoverTape* tape);

// Accumulates parameter gradients; d_out / d_aux / d_pooled may be empty.
// When d_input is non-null the gradient w.r.t. the RGB input is produced
// (needed when the input itself came from a differentiable camera pass).
void recover_backward(Pipeline& pipe, const RecoverTape& tape,
                      const Image* d_out, std::span<const double> d_aux,
                      std::span<const double> d_pooled, Image* d_input);

// ---- effective per-pass camera ----

// Combines a domain's trainable camera block with the aux-head prediction
// for the image driving the pass (aux == nullptr for passes that transform a
// measured cube directly). sigma is additively adjusted and clamped at 0;
// nu and mu are adjusted additively in log.
struct EffectiveCamera {
  ResponseMatrix rm;  // base + (delta + aux displacement), pre-clamp
  double sigma_pre = 0.0;
  double sigma = 0.0;
  double nu = 0.0;
  double mu = 1.0;
  int quality = 90;
  bool has_aux = false;
};

EffectiveCamera effective_camera(const Pipeline& pipe,
                                 const std::string& prefix,
                                 const std::vector<double>* aux);

CameraParams camera_params(const EffectiveCamera& cam, CameraMode mode);

// ---- losses ----

struct LossBreakdown {
  double band = 0.0;
  double rgb = 0.0;
  double spectral = 0.0;
  double domain = 0.0;
  double trans = 0.0;  // material cycle term, also contained in rgb
  double total = 0.0;
};

// L_total = w_band*band + w_rgb*rgb + w_spectral*spectral + w_domain*domain.
double combine_total(const LossBreakdown& terms, const TrainConfig& cfg);

struct StepSample {
  const Image* x_s = nullptr;
  const Image* h_s = nullptr;
  const Image* x_m = nullptr;
};

struct StepKeys {
  rng::Key cam_m, cam_s_hat, cam_s_true;
};

// Camera noise streams are keyed per (seed, dataset sample), so a fixed
// sample sees the same draws on every step.
StepKeys sample_keys(std::uint64_t seed, std::uint64_t spectral_index,
                     std::uint64_t material_index);

// The stream `spectrapipe simulate --seed N` consumes; equals the material
// sample-0 camera stream so a recover/simulate round trip reproduces the
// training-side evaluation.
rng::Key material_camera_key(std::uint64_t seed, std::uint64_t index);

// Full objective at one sample. With `with_grad` the parameter gradients
// (scaled by grad_scale) accumulate into pipe.params.grad; reverse_domain
// flips the feature gradient at the discriminator junction. The band term
// is an L1 penalty on the trainable displacements; its subgradient enters
// the gradient only when band_subgradient is set — train() instead applies
// the exact proximal shrink after each momentum step, which realizes the
// same objective without subgradient chatter.
LossBreakdown compute_losses(Pipeline& pipe, const StepSample& sample,
                             const TrainConfig& cfg, const StepKeys& keys,
                             bool with_grad, bool reverse_domain,
                             double grad_scale = 1.0,
                             bool band_subgradient = true);

// Standalone loss operations (forward only).
double loss_trans(Pipeline& pipe, const Image& x_m, rng::Key key);
double loss_rgb(Pipeline& pipe, const Image& x_s, const Image& h_s,
                const Image& x_m, const StepKeys& keys);
double loss_spectral(Pipeline& pipe, const Image& h_s, const Image& x_s,
                     rng::Key cam_key, double epsilon);

// ---- training ----

struct SpectralPair {
  Image rgb;
  Image cube;
};

struct TraceEntry {
  int step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<TraceEntry> trace;
  int best_step = -1;
  double best_trans = std::numeric_limits<double>::infinity();
};

// Gradient descent with momentum over every trainable slice. Each step
// draws one spectral pair and one material image per batch item. The model
// left in `pipe` afterwards is the checkpoint minimizing the material cycle
// loss over the trace. Throws NumericError naming the offending term when a
// loss goes non-finite.
TrainResult train(Pipeline& pipe, std::span<const SpectralPair> spectral,
                  std::span<const Image> material, const TrainConfig& cfg);

// ---- gradient check ----

struct GradCheckEntry {
  std::size_t index = 0;
  std::string slice;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
  std::vector<std::string> excluded;  // kink-adjacent parameters skipped
  std::vector<GradCheckEntry> entries;
};

// Compares the analytic gradient of the full objective against central
// finite differences (step fd_step) on n_params randomly chosen parameters.
// Parameters within 1e-4 of an |.| or clamp kink are excluded and flagged.
// The reversal junction is disabled so the analytic side is the true
// gradient of the evaluated scalar.
GradCheckReport grad_check(Pipeline& pipe, const StepSample& sample,
                           const TrainConfig& cfg, int n_params,
                           std::uint64_t seed, double fd_step = 1e-5);

}  // namespace spectra
