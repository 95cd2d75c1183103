#pragma once

#include <span>
#include <vector>

namespace spectra {

struct DomainTape {
  std::vector<double> pooled_s, pooled_m;
  double logit_s = 0.0;
  double logit_m = 0.0;
};

// Binary cross-entropy of a logistic discriminator labeling pooled trunk
// features: spectral-domain samples as 0, material-domain samples as 1.
// Mean over the two samples, so two zero logits give ln 2.
double domain_loss(std::span<const double> disc_w, double disc_b,
                   std::span<const double> features_s,
                   std::span<const double> features_m,
                   DomainTape* tape = nullptr);

// Accumulates discriminator gradients and writes feature gradients. When
// `reverse` is set the feature gradients are negated at the junction: the
// discriminator still descends while everything upstream ascends.
void domain_loss_backward(const DomainTape& tape,
                          std::span<const double> disc_w, double upstream,
                          bool reverse, std::span<double> d_disc_w,
                          double& d_disc_b, std::span<double> d_features_s,
                          std::span<double> d_features_m);

}  // namespace spectra
