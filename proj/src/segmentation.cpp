#include "spectra/segmentation.h"

#include <algorithm>
#include <cmath>

#include "spectra/parallel.h"
#include "spectra/rng.h"

namespace spectra {

namespace {

void glorot_init(std::span<double> w, int fan_in, int fan_out, rng::Key k) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = (2.0 * rng::uniform(k, i) - 1.0) * a;
  }
}

}  // namespace

SegModel make_seg_model(int n_filters, int classes, int hidden,
                        std::uint64_t seed) {
  if (n_filters < 1 || classes < 2 || hidden < 1) {
    throw ValueError("seg model: need n_filters >= 1, classes >= 2, hidden >= 1");
  }
  if (classes > 254) throw ValueError("seg model: at most 254 classes");
  SegModel m;
  m.inputs = n_filters + 3;
  m.hidden = hidden;
  m.classes = classes;
  m.params.add("seg.w1", static_cast<std::size_t>(hidden) * m.inputs);
  m.params.add("seg.b1", static_cast<std::size_t>(hidden));
  m.params.add("seg.w2", static_cast<std::size_t>(classes) * hidden);
  m.params.add("seg.b2", static_cast<std::size_t>(classes));
  const rng::Key ik = rng::fork(rng::key(seed), 0x5E6);
  glorot_init(m.params.view("seg.w1"), m.inputs, hidden, rng::fork(ik, 0));
  glorot_init(m.params.view("seg.w2"), hidden, classes, rng::fork(ik, 1));
  return m;
}

namespace {

struct SegForward {
  std::vector<double> z1;      // hidden
  std::vector<double> logits;  // classes
  std::vector<double> probs;   // classes
};

void seg_pixel_forward(const SegModel& m, const double* input,
                       SegForward& f) {
  const auto w1 = m.params.view("seg.w1");
  const auto b1 = m.params.view("seg.b1");
  const auto w2 = m.params.view("seg.w2");
  const auto b2 = m.params.view("seg.b2");
  f.z1.resize(static_cast<std::size_t>(m.hidden));
  f.logits.resize(static_cast<std::size_t>(m.classes));
  f.probs.resize(static_cast<std::size_t>(m.classes));
  for (int i = 0; i < m.hidden; ++i) {
    const double* row = w1.data() + static_cast<std::size_t>(i) * m.inputs;
    double acc = b1[static_cast<std::size_t>(i)];
    for (int j = 0; j < m.inputs; ++j) acc += row[j] * input[j];
    f.z1[static_cast<std::size_t>(i)] = acc > 0.0 ? acc : 0.0;
  }
  double mx = -1e300;
  for (int c = 0; c < m.classes; ++c) {
    const double* row = w2.data() + static_cast<std::size_t>(c) * m.hidden;
    double acc = b2[static_cast<std::size_t>(c)];
    for (int i = 0; i < m.hidden; ++i) acc += row[i] * f.z1[static_cast<std::size_t>(i)];
    f.logits[static_cast<std::size_t>(c)] = acc;
    mx = std::max(mx, acc);
  }
  double sum = 0.0;
  for (int c = 0; c < m.classes; ++c) {
    f.probs[static_cast<std::size_t>(c)] = std::exp(f.logits[static_cast<std::size_t>(c)] - mx);
    sum += f.probs[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < m.classes; ++c) f.probs[static_cast<std::size_t>(c)] /= sum;
}

void gather_input(const Image& features, const ObservationMap& obs,
                  std::size_t pi, int n_filters, double* input) {
  for (int k = 0; k < n_filters; ++k) {
    input[k] = features.data[static_cast<std::size_t>(k) * features.plane() + pi];
  }
  input[n_filters + 0] = obs.observations.data[0 * features.plane() + pi];
  input[n_filters + 1] = obs.observations.data[1 * features.plane() + pi];
  input[n_filters + 2] = obs.observations.data[2 * features.plane() + pi];
}

}  // namespace

SegResult segment(const Image& cube, const FilterBank& fb,
                  const SpectralDb& db, const SegModel& model) {
  if (model.inputs != fb.n_filters + 3) {
    throw ShapeError("segment: model expects " + std::to_string(model.inputs) +
                     " inputs, filters provide " +
                     std::to_string(fb.n_filters + 3));
  }
  const Image features = apply_filters(cube, fb);
  const ObservationMap obs = attach_observations(cube, db);
  const std::int64_t npx = static_cast<std::int64_t>(cube.plane());
  SegResult out;
  out.labels = LabelMap(cube.height, cube.width, 0);
  out.probs = Image(model.classes, cube.height, cube.width);
  parallel_for(npx, [&](std::int64_t p) {
    const std::size_t pi = static_cast<std::size_t>(p);
    std::vector<double> input(static_cast<std::size_t>(model.inputs));
    gather_input(features, obs, pi, fb.n_filters, input.data());
    SegForward f;
    seg_pixel_forward(model, input.data(), f);
    int best = 0;
    for (int c = 1; c < model.classes; ++c) {
      if (f.probs[static_cast<std::size_t>(c)] > f.probs[static_cast<std::size_t>(best)]) best = c;
    }
    out.labels.labels[pi] = static_cast<std::uint8_t>(best);
    for (int c = 0; c < model.classes; ++c) {
      out.probs.data[static_cast<std::size_t>(c) * cube.plane() + pi] =
          f.probs[static_cast<std::size_t>(c)];
    }
  });
  return out;
}

SegTrainResult train_seg(std::span<const Image> cubes,
                         std::span<const LabelMap> labels, FilterBank& fb,
                         const SpectralDb& db, SegModel& model,
                         const SegTrainConfig& cfg) {
  if (cubes.size() != labels.size() || cubes.empty()) {
    throw ValueError("train_seg: need matching non-empty cubes and labels");
  }
  if (model.inputs != fb.n_filters + 3) {
    throw ShapeError("train_seg: model width does not match filter count");
  }
  std::int64_t n_labeled = 0;
  for (std::size_t ci = 0; ci < cubes.size(); ++ci) {
    if (labels[ci].height != cubes[ci].height ||
        labels[ci].width != cubes[ci].width) {
      throw ShapeError("train_seg: label map size mismatch");
    }
    for (std::uint8_t l : labels[ci].labels) {
      if (l == LabelMap::kUnlabeled) continue;
      if (l >= model.classes) {
        throw ValueError("train_seg: label " + std::to_string(l) +
                         " outside [0, classes)");
      }
      ++n_labeled;
    }
  }
  if (n_labeled == 0) throw ValueError("train_seg: no labeled pixels");

  // db and cubes are fixed, so the matched observations are too
  std::vector<ObservationMap> obs;
  obs.reserve(cubes.size());
  for (const auto& cube : cubes) obs.push_back(attach_observations(cube, db));

  const std::size_t n_seg = model.params.values.size();
  const std::size_t n_logits = fb.logits.size();
  std::vector<double> vel_seg(n_seg, 0.0), vel_logits(n_logits, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n_labeled);
  const std::size_t off_w1 = model.params.slice("seg.w1").offset;
  const std::size_t off_b1 = model.params.slice("seg.b1").offset;
  const std::size_t off_w2 = model.params.slice("seg.w2").offset;
  const std::size_t off_b2 = model.params.slice("seg.b2").offset;

  SegTrainResult res;
  for (int step = 0; step < cfg.steps; ++step) {
    model.params.zero_grad();
    std::vector<double> d_logits(n_logits, 0.0);
    double loss = 0.0;
    for (std::size_t ci = 0; ci < cubes.size(); ++ci) {
      const Image& cube = cubes[ci];
      const LabelMap& lm = labels[ci];
      const Image features = apply_filters(cube, fb);
      const std::int64_t npx = static_cast<std::int64_t>(cube.plane());
      Image d_features(fb.n_filters, cube.height, cube.width);

      loss += deterministic_transform_sum(npx, [&](std::int64_t p) {
        const std::size_t pi = static_cast<std::size_t>(p);
        if (lm.labels[pi] == LabelMap::kUnlabeled) return 0.0;
        std::vector<double> input(static_cast<std::size_t>(model.inputs));
        gather_input(features, obs[ci], pi, fb.n_filters, input.data());
        SegForward f;
        seg_pixel_forward(model, input.data(), f);
        const double pt = f.probs[static_cast<std::size_t>(lm.labels[pi])];
        return -std::log(std::max(pt, 1e-300));
      }) * inv_n;

      constexpr std::int64_t kBlock = 512;
      const std::int64_t nb = (npx + kBlock - 1) / kBlock;
      std::vector<double> buf(static_cast<std::size_t>(nb) * n_seg, 0.0);
      parallel_for(nb, [&](std::int64_t blk) {
        double* g = buf.data() + static_cast<std::size_t>(blk) * n_seg;
        const auto w1 = model.params.view("seg.w1");
        const auto w2 = model.params.view("seg.w2");
        std::vector<double> input(static_cast<std::size_t>(model.inputs));
        std::vector<double> dz1(static_cast<std::size_t>(model.hidden));
        SegForward f;
        const std::int64_t lo = blk * kBlock;
        const std::int64_t hi = std::min(lo + kBlock, npx);
        for (std::int64_t p = lo; p < hi; ++p) {
          const std::size_t pi = static_cast<std::size_t>(p);
          if (lm.labels[pi] == LabelMap::kUnlabeled) {
            for (int k = 0; k < fb.n_filters; ++k) {
              d_features.data[static_cast<std::size_t>(k) * cube.plane() + pi] = 0.0;
            }
            continue;
          }
          gather_input(features, obs[ci], pi, fb.n_filters, input.data());
          seg_pixel_forward(model, input.data(), f);
          // d logits = (softmax - onehot) / n_labeled
          for (int c = 0; c < model.classes; ++c) {
            const double dlc =
                (f.probs[static_cast<std::size_t>(c)] -
                 (c == lm.labels[pi] ? 1.0 : 0.0)) * inv_n;
            g[off_b2 + static_cast<std::size_t>(c)] += dlc;
            double* row = g + off_w2 + static_cast<std::size_t>(c) * model.hidden;
            for (int i = 0; i < model.hidden; ++i) {
              row[i] += dlc * f.z1[static_cast<std::size_t>(i)];
            }
          }
          for (int i = 0; i < model.hidden; ++i) {
            double acc = 0.0;
            for (int c = 0; c < model.classes; ++c) {
              const double dlc =
                  (f.probs[static_cast<std::size_t>(c)] -
                   (c == lm.labels[pi] ? 1.0 : 0.0)) * inv_n;
              acc += w2[static_cast<std::size_t>(c) * model.hidden + i] * dlc;
            }
            dz1[static_cast<std::size_t>(i)] =
                f.z1[static_cast<std::size_t>(i)] > 0.0 ? acc : 0.0;
          }
          for (int i = 0; i < model.hidden; ++i) {
            const double d = dz1[static_cast<std::size_t>(i)];
            if (d == 0.0) continue;
            g[off_b1 + static_cast<std::size_t>(i)] += d;
            double* row = g + off_w1 + static_cast<std::size_t>(i) * model.inputs;
            for (int j = 0; j < model.inputs; ++j) row[j] += d * input[j];
          }
          // gradient w.r.t. the filtered features
          for (int k = 0; k < fb.n_filters; ++k) {
            double acc = 0.0;
            for (int i = 0; i < model.hidden; ++i) {
              acc += w1[static_cast<std::size_t>(i) * model.inputs + k] *
                     dz1[static_cast<std::size_t>(i)];
            }
            d_features.data[static_cast<std::size_t>(k) * cube.plane() + pi] = acc;
          }
        }
      });
      for (std::int64_t blk = 0; blk < nb; ++blk) {
        const double* g = buf.data() + static_cast<std::size_t>(blk) * n_seg;
        for (std::size_t j = 0; j < n_seg; ++j) model.params.grad[j] += g[j];
      }
      if (cfg.update_filters) {
        apply_filters_backward(cube, fb, features, d_features, d_logits);
      }
    }
    res.loss_trace.push_back(loss);

    for (std::size_t i = 0; i < n_seg; ++i) {
      if (!cfg.update_hidden && i < off_w2) continue;  // freeze w1/b1
      vel_seg[i] = cfg.momentum * vel_seg[i] -
                   cfg.learning_rate * model.params.grad[i];
      model.params.values[i] += vel_seg[i];
    }
    if (cfg.update_filters) {
      for (std::size_t i = 0; i < n_logits; ++i) {
        vel_logits[i] =
            cfg.momentum * vel_logits[i] - cfg.learning_rate * d_logits[i];
        fb.logits[i] += vel_logits[i];
      }
    }
  }
  return res;
}

double pixel_acc(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("pixel_acc: label map size mismatch");
  }
  std::int64_t labeled = 0, correct = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] == LabelMap::kUnlabeled) continue;
    ++labeled;
    if (pred.labels[i] == gt.labels[i]) ++correct;
  }
  if (labeled == 0) throw ValueError("pixel_acc: no labeled pixels");
  return static_cast<double>(correct) / static_cast<double>(labeled);
}

double mean_acc(const LabelMap& pred, const LabelMap& gt, int classes) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("mean_acc: label map size mismatch");
  }
  std::int64_t labeled = 0;
  std::vector<std::int64_t> total(static_cast<std::size_t>(classes), 0);
  std::vector<std::int64_t> hit(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    if (g == LabelMap::kUnlabeled) continue;
    if (g >= classes) throw ValueError("mean_acc: ground-truth label outside [0, classes)");
    ++labeled;
    ++total[g];
    if (pred.labels[i] == g) ++hit[g];
  }
  if (labeled == 0) throw ValueError("mean_acc: no labeled pixels");
  double acc = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    if (total[static_cast<std::size_t>(c)] == 0) continue;  // absent classes excluded
    acc += static_cast<double>(hit[static_cast<std::size_t>(c)]) /
           static_cast<double>(total[static_cast<std::size_t>(c)]);
    ++present;
  }
  return acc / static_cast<double>(present);
}

void save_seg_checkpoint(const std::string& path, const SegModel& model,
                         const FilterBank& fb) {
  ParamStore out;
  const auto logit_slice = out.add("filters.logits", fb.logits.size());
  std::copy(fb.logits.begin(), fb.logits.end(),
            out.values.begin() + static_cast<std::ptrdiff_t>(logit_slice.offset));
  for (const auto& [name, s] : model.params.slices) {
    const auto d = out.add(name, s.length);
    std::copy(model.params.values.begin() + static_cast<std::ptrdiff_t>(s.offset),
              model.params.values.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length),
              out.values.begin() + static_cast<std::ptrdiff_t>(d.offset));
  }
  save_checkpoint(path, out);
}

SegCheckpoint load_seg_checkpoint(const std::string& path) {
  ParamStore ps = load_checkpoint(path);
  for (const char* name : {"filters.logits", "seg.w1", "seg.b1", "seg.w2", "seg.b2"}) {
    if (!ps.has(name)) {
      throw FormatError("segmentation checkpoint lacks slice " +
                        std::string(name));
    }
  }
  SegCheckpoint out;
  const std::size_t n_logits = ps.slice("filters.logits").length;
  if (n_logits % kBands != 0) {
    throw FormatError("segmentation checkpoint: filter logits not a multiple of 31");
  }
  out.fb = FilterBank(static_cast<int>(n_logits / kBands), kBands);
  const auto lv = ps.view("filters.logits");
  std::copy(lv.begin(), lv.end(), out.fb.logits.begin());

  const int hidden = static_cast<int>(ps.slice("seg.b1").length);
  const int classes = static_cast<int>(ps.slice("seg.b2").length);
  const int inputs = static_cast<int>(ps.slice("seg.w1").length) / hidden;
  if (inputs != out.fb.n_filters + 3 ||
      ps.slice("seg.w2").length != static_cast<std::size_t>(classes) * hidden) {
    throw FormatError("segmentation checkpoint: inconsistent slice sizes");
  }
  out.model.inputs = inputs;
  out.model.hidden = hidden;
  out.model.classes = classes;
  out.model.params.add("seg.w1", static_cast<std::size_t>(hidden) * inputs);
  out.model.params.add("seg.b1", static_cast<std::size_t>(hidden));
  out.model.params.add("seg.w2", static_cast<std::size_t>(classes) * hidden);
  out.model.params.add("seg.b2", static_cast<std::size_t>(classes));
  for (const char* name : {"seg.w1", "seg.b1", "seg.w2", "seg.b2"}) {
    const auto src = ps.view(name);
    auto dst = out.model.params.view(name);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

}  // namespace spectra
