#pragma once

#include <string>
#include <vector>

#include "spectra/image.h"

namespace spectra {

// Interpretable per-band filters: each filter is a softmax over the 31-band
// axis, so applying it takes a convex combination of band values and the
// learned weights read like response curves.
struct FilterBank {
  int n_filters = 12;
  int bands = kBands;
  std::vector<double> logits;  // n_filters x bands

  FilterBank() = default;
  FilterBank(int n, int b)
      : n_filters(n), bands(b),
        logits(static_cast<std::size_t>(n) * b, 0.0) {}
};

// Row-stochastic effective weights, n_filters x bands.
std::vector<double> effective_filters(const FilterBank& fb);

// feature_k = sum_b weights[k,b] * cube[b] per pixel. weights rows need not
// come from a softmax; the CSV import path feeds them directly.
Image apply_filters(const Image& cube, const std::vector<double>& weights,
                    int n_filters);
Image apply_filters(const Image& cube, const FilterBank& fb);

// d(features)/d(logits) for a softmax bank:
// d logit[k,b] += sum_p d_feat[k,p] * w[k,b] * (cube[b,p] - feat[k,p]).
void apply_filters_backward(const Image& cube, const FilterBank& fb,
                            const Image& features, const Image& d_features,
                            std::vector<double>& d_logits);

// CSV `wavelength,f1..fN`, 31 rows, 17 significant digits so a reload
// reproduces apply_filters output bit-for-bit.
void export_filters_csv(const std::string& path, const FilterBank& fb);

struct LoadedFilters {
  int n_filters = 0;
  std::vector<double> weights;  // n_filters x kBands
};

LoadedFilters load_filters_csv(const std::string& path);

}  // namespace spectra
