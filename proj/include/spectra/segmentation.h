#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spectra/filters.h"
#include "spectra/image.h"
#include "spectra/params.h"
#include "spectra/spectral_db.h"

namespace spectra {

// Fusion classifier over filtered spectral features plus the matched
// observations (photopic, specularity, roughness).
struct SegModel {
  int inputs = 0;  // n_filters + 3
  int hidden = 32;
  int classes = 0;
  ParamStore params;  // seg.w1, seg.b1, seg.w2, seg.b2
};

SegModel make_seg_model(int n_filters, int classes, int hidden,
                        std::uint64_t seed);

struct SegResult {
  LabelMap labels;
  Image probs;  // classes x H x W, softmax per pixel
};

// Per pixel: apply_filters, attach_observations, concatenate, classify,
// argmax with ties resolved to the lowest class id.
SegResult segment(const Image& cube, const FilterBank& fb,
                  const SpectralDb& db, const SegModel& model);

struct SegTrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int steps = 2000;
  std::uint64_t seed = 0;
  bool update_filters = true;
  bool update_hidden = true;  // freeze w1/b1 for a convex final-layer fit
};

struct SegTrainResult {
  std::vector<double> loss_trace;  // full-batch cross-entropy per step
};

// Full-batch cross-entropy over labeled pixels only, jointly updating the
// classifier and the filter logits. Throws ValueError when no pixel is
// labeled.
SegTrainResult train_seg(std::span<const Image> cubes,
                         std::span<const LabelMap> labels, FilterBank& fb,
                         const SpectralDb& db, SegModel& model,
                         const SegTrainConfig& cfg);

// Fraction of labeled pixels predicted correctly.
double pixel_acc(const LabelMap& pred, const LabelMap& gt);

// Mean per-class recall over classes present in the ground truth.
double mean_acc(const LabelMap& pred, const LabelMap& gt, int classes);

// Segmentation checkpoint: the filter bank logits and classifier weights in
// one parameter file.
void save_seg_checkpoint(const std::string& path, const SegModel& model,
                         const FilterBank& fb);
struct SegCheckpoint {
  SegModel model;
  FilterBank fb;
};
SegCheckpoint load_seg_checkpoint(const std::string& path);

}  // namespace spectra
