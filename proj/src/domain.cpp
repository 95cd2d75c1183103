#include "spectra/domain.h"

#include <cmath>

#include "spectra/errors.h"

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

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

double domain_loss(std::span<const double> disc_w, double disc_b,
                   std::span<const double> features_s,
                   std::span<const double> features_m, DomainTape* tape) {
  if (features_s.size() != disc_w.size() ||
      features_m.size() != disc_w.size()) {
    throw ShapeError("domain_loss: feature width mismatch");
  }
  const double z_s = dot(disc_w, features_s) + disc_b;
  const double z_m = dot(disc_w, features_m) + disc_b;
  if (tape != nullptr) {
    tape->pooled_s.assign(features_s.begin(), features_s.end());
    tape->pooled_m.assign(features_m.begin(), features_m.end());
    tape->logit_s = z_s;
    tape->logit_m = z_m;
  }
  // target 0 for spectral, 1 for material
  return 0.5 * (stable_softplus(z_s) + stable_softplus(-z_m));
}

void domain_loss_backward(const DomainTape& tape,
                          std::span<const double> disc_w, double upstream,
                          bool reverse, std::span<double> d_disc_w,
                          double& d_disc_b, std::span<double> d_features_s,
                          std::span<double> d_features_m) {
  const double dz_s = upstream * 0.5 * sigmoid(tape.logit_s);
  const double dz_m = upstream * 0.5 * (sigmoid(tape.logit_m) - 1.0);
  const double flip = reverse ? -1.0 : 1.0;
  for (std::size_t i = 0; i < disc_w.size(); ++i) {
    d_disc_w[i] += dz_s * tape.pooled_s[i] + dz_m * tape.pooled_m[i];
    d_features_s[i] += flip * dz_s * disc_w[i];
    d_features_m[i] += flip * dz_m * disc_w[i];
  }
  d_disc_b += dz_s + dz_m;
}

}  // namespace spectra
