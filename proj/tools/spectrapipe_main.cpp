// spectrapipe: synthetic spectral imaging pipeline driver.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spectra/io.h"
#include "spectra/metrics.h"
#include "spectra/parallel.h"
#include "spectra/recovery.h"
#include "spectra/response.h"
#include "spectra/segmentation.h"
#include "spectra/spectral_db.h"
#include "spectra/synth.h"

namespace fs = std::filesystem;
using namespace spectra;

namespace {

std::string fmt9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ResponseMatrix load_curves_or_default(const std::string& path) {
  if (path.empty()) return synthetic_standard_curves();
  return load_standard_curves(path);
}

TrainConfig train_config_from(const RunConfig& rc) {
  TrainConfig cfg;
  cfg.w_band = rc.w_band;
  cfg.w_rgb = rc.w_rgb;
  cfg.w_spectral = rc.w_spectral;
  cfg.w_domain = rc.w_domain;
  cfg.learning_rate = rc.learning_rate;
  cfg.momentum = rc.momentum;
  cfg.steps = rc.steps;
  cfg.batch_size = rc.batch_size;
  cfg.seed = rc.seed;
  cfg.mrae_epsilon = rc.mrae_epsilon;
  cfg.hidden = rc.hidden_width;
  cfg.sigma_init = rc.sigma;
  cfg.nu_init = rc.nu;
  cfg.mu_init = rc.mu;
  cfg.jpeg_quality = rc.jpeg_quality;
  return cfg;
}

std::vector<fs::path> sorted_matches(const std::string& dir,
                                     const std::string& suffix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SpectralPair> load_spectral_dataset(const std::string& dir) {
  std::vector<SpectralPair> pairs;
  for (const auto& cube_path : sorted_matches(dir, ".hsc")) {
    fs::path rgb = cube_path;
    rgb.replace_extension();
    rgb += "_rgb_s.pfm";
    if (!fs::exists(rgb)) {
      throw IoError("missing spectral render for " + cube_path.string() +
                    " (expected " + rgb.string() + ")");
    }
    SpectralPair p;
    p.cube = load_cube(cube_path.string());
    p.rgb = load_pfm(rgb.string());
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw IoError("no .hsc cubes found in " + dir);
  return pairs;
}

std::vector<Image> load_material_dataset(const std::string& dir) {
  std::vector<Image> images;
  for (const auto& p : sorted_matches(dir, "_rgb_m.pfm")) {
    images.push_back(load_pfm(p.string()));
  }
  if (images.empty()) throw IoError("no *_rgb_m.pfm images found in " + dir);
  return images;
}

void round_image_f32(Image& img) {
  for (double& v : img.data) v = static_cast<double>(static_cast<float>(v));
}

// Evaluates the material cycle loss exactly as a recover -> simulate round
// trip through the serialized artifacts reproduces it: parameters through
// the float32 checkpoint, the cube through HSC1, the render through PFM.
double final_loss_trans_filewise(Pipeline& pipe, const Image& x_m,
                                 std::uint64_t seed) {
  RecoverTape tape;
  Image hhat = recover_forward(pipe, x_m, &tape);
  round_image_f32(hhat);
  const EffectiveCamera cam = effective_camera(pipe, "cam_m", &tape.aux);
  Image xhat =
      camera_forward(hhat, cam.rm, camera_params(cam, CameraMode::kDifferentiable),
                     material_camera_key(seed, 0));
  round_image_f32(xhat);
  return mse(x_m, xhat);
}

int cmd_gen_synth(const SynthConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const SynthData data = gen_synth(cfg);
  char name[64];
  for (std::size_t i = 0; i < data.scenes.size(); ++i) {
    const auto& sc = data.scenes[i];
    std::snprintf(name, sizeof(name), "scene_%03zu", i);
    const std::string stem = (fs::path(out_dir) / name).string();
    save_cube(stem + ".hsc", sc.cube);
    save_pgm(stem + "_labels.pgm", sc.labels);
    save_pfm(stem + "_rgb_s.pfm", sc.rgb_s);
    save_pfm(stem + "_rgb_m.pfm", sc.rgb_m);
  }
  save_spectral_db((fs::path(out_dir) / "db.csv").string(), data.db);
  save_weighting_curve((fs::path(out_dir) / "photopic.csv").string(),
                       data.photopic_curve);
  save_weighting_curve((fs::path(out_dir) / "melanopic.csv").string(),
                       data.melanopic_curve);
  std::cout << "scenes=" << data.scenes.size()
            << " db_entries=" << data.db.entries.size() << "\n";
  return 0;
}

int cmd_simulate(const std::string& cube_path, const std::string& curves_path,
                 const RunConfig& rc, std::uint64_t seed,
                 const std::string& out_path, const std::string& preview) {
  const Image cube = load_cube(cube_path);
  const ResponseMatrix rm = load_curves_or_default(curves_path);
  CameraParams p;
  p.sigma = rc.sigma;
  p.nu = rc.nu;
  p.mu = rc.mu;
  p.jpeg_quality = rc.jpeg_quality;
  p.mode = rc.mode == "differentiable" ? CameraMode::kDifferentiable
                                       : CameraMode::kSample;
  const Image rgb = camera_forward(cube, rm, p, material_camera_key(seed, 0));
  save_pfm(out_path, rgb);
  if (!preview.empty()) save_ppm_preview(preview, rgb);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& spectral_dir, const std::string& material_dir,
              const std::string& curves_path, const RunConfig& rc,
              const std::string& out_path, const std::string& trace_path) {
  const auto spectral = load_spectral_dataset(spectral_dir);
  const auto material = load_material_dataset(material_dir);
  const TrainConfig cfg = train_config_from(rc);
  const ResponseMatrix standard = load_curves_or_default(curves_path);
  Pipeline pipe = make_pipeline(cfg, standard);
  const TrainResult res = train(pipe, spectral, material, cfg);

  round_through_f32(pipe.params);
  save_checkpoint(out_path, pipe.params);

  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) throw IoError("cannot write trace: " + trace_path);
    out << "step,total,band,rgb,spectral,domain,trans\n";
    for (const auto& e : res.trace) {
      out << e.step << "," << fmt_full(e.loss.total) << ","
          << fmt_full(e.loss.band) << "," << fmt_full(e.loss.rgb) << ","
          << fmt_full(e.loss.spectral) << "," << fmt_full(e.loss.domain)
          << "," << fmt_full(e.loss.trans) << "\n";
    }
  }

  if (!res.trace.empty()) {
    const auto& last = res.trace.back().loss;
    std::cout << "last_step=" << res.trace.back().step
              << " total=" << fmt9(last.total) << " band=" << fmt9(last.band)
              << " rgb=" << fmt9(last.rgb)
              << " spectral=" << fmt9(last.spectral)
              << " domain=" << fmt9(last.domain)
              << " trans=" << fmt9(last.trans) << "\n";
  }
  std::cout << "best_step=" << res.best_step
            << " best_trans=" << fmt9(res.best_trans) << "\n";
  const double final_trans =
      final_loss_trans_filewise(pipe, material[0], cfg.seed);
  std::cout << "final_loss_trans=" << fmt_full(final_trans) << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_recover(const std::string& model_path, const std::string& input_path,
                const std::string& curves_path, const std::string& out_path,
                const std::string& emit_camera, const std::string& domain) {
  const ResponseMatrix standard = load_curves_or_default(curves_path);
  Pipeline pipe = pipeline_from_checkpoint(model_path, standard);
  const Image x = load_pfm(input_path);
  RecoverTape tape;
  Image cube = recover_forward(pipe, x, &tape);
  save_cube(out_path, cube);
  if (!emit_camera.empty()) {
    if (domain != "s" && domain != "m") {
      throw ValueError("recover: --domain must be s or m");
    }
    const EffectiveCamera cam =
        effective_camera(pipe, domain == "s" ? "cam_s" : "cam_m", &tape.aux);
    save_response_csv(emit_camera + "_curves.csv", effective_matrix(cam.rm));
    std::ofstream cf(emit_camera + ".cfg");
    if (!cf) throw IoError("cannot write camera config");
    cf << "sigma=" << fmt_full(cam.sigma) << "\n"
       << "nu=" << fmt_full(cam.nu) << "\n"
       << "mu=1\n"
       << "jpeg_quality=" << cam.quality << "\n"
       << "mode=differentiable\n";
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_train_seg(const std::string& data_dir, const std::string& db_path,
                  const RunConfig& rc, std::uint64_t seed,
                  const std::string& out_path) {
  std::vector<Image> cubes;
  std::vector<LabelMap> labels;
  for (const auto& cube_path : sorted_matches(data_dir, ".hsc")) {
    fs::path lp = cube_path;
    lp.replace_extension();
    lp += "_labels.pgm";
    if (!fs::exists(lp)) {
      throw IoError("missing label map for " + cube_path.string());
    }
    cubes.push_back(load_cube(cube_path.string()));
    labels.push_back(load_pgm(lp.string()));
  }
  if (cubes.empty()) throw IoError("no .hsc cubes found in " + data_dir);
  const std::string db_file =
      db_path.empty() ? (fs::path(data_dir) / "db.csv").string() : db_path;
  const SpectralDb db = load_spectral_db(db_file);

  int classes = rc.classes;
  if (classes == 0) {
    for (const auto& lm : labels) {
      for (std::uint8_t l : lm.labels) {
        if (l != LabelMap::kUnlabeled) classes = std::max(classes, l + 1);
      }
    }
  }
  if (classes < 2) throw ValueError("train-seg: need at least 2 classes");

  FilterBank fb(rc.n_filters, kBands);
  SegModel model = make_seg_model(rc.n_filters, classes, rc.seg_hidden, seed);
  SegTrainConfig scfg;
  scfg.learning_rate = rc.seg_learning_rate;
  scfg.momentum = rc.seg_momentum;
  scfg.steps = rc.seg_steps;
  scfg.seed = seed;
  const SegTrainResult res = train_seg(cubes, labels, fb, db, model, scfg);
  save_seg_checkpoint(out_path, model, fb);
  std::cout << "steps=" << res.loss_trace.size() << " final_ce="
            << fmt9(res.loss_trace.empty() ? 0.0 : res.loss_trace.back())
            << "\n";
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_segment(const std::string& cube_path, const std::string& model_path,
                const std::string& db_path, const std::string& out_path) {
  const Image cube = load_cube(cube_path);
  const SegCheckpoint ck = load_seg_checkpoint(model_path);
  const SpectralDb db = load_spectral_db(db_path);
  const SegResult res = segment(cube, ck.fb, db, ck.model);
  save_pgm(out_path, res.labels);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             int classes, const std::string& model_path,
             const std::string& spectral_dir, const std::string& material_dir,
             const std::string& curves_path, const RunConfig& rc) {
  if (!pred_path.empty() || !gt_path.empty()) {
    if (pred_path.empty() || gt_path.empty()) {
      throw ValueError("eval: need both --pred and --gt");
    }
    const LabelMap pred = load_pgm(pred_path);
    const LabelMap gt = load_pgm(gt_path);
    int c = classes;
    if (c == 0) {
      for (std::uint8_t l : gt.labels) {
        if (l != LabelMap::kUnlabeled) c = std::max(c, l + 1);
      }
    }
    std::cout << "pixel_acc=" << fmt9(pixel_acc(pred, gt))
              << " mean_acc=" << fmt9(mean_acc(pred, gt, c)) << "\n";
  }
  if (!model_path.empty()) {
    if (spectral_dir.empty() || material_dir.empty()) {
      throw ValueError("eval: loss table needs --spectral-dir and --material-dir");
    }
    const ResponseMatrix standard = load_curves_or_default(curves_path);
    Pipeline pipe = pipeline_from_checkpoint(model_path, standard);
    const auto spectral = load_spectral_dataset(spectral_dir);
    const auto material = load_material_dataset(material_dir);
    const TrainConfig cfg = train_config_from(rc);
    LossBreakdown avg;
    const std::size_t n = std::min(spectral.size(), material.size());
    for (std::size_t i = 0; i < n; ++i) {
      const StepSample smp{&spectral[i].rgb, &spectral[i].cube, &material[i]};
      const StepKeys keys = sample_keys(cfg.seed, i, i);
      const LossBreakdown lb =
          compute_losses(pipe, smp, cfg, keys, false, false);
      avg.band += lb.band / n;
      avg.rgb += lb.rgb / n;
      avg.spectral += lb.spectral / n;
      avg.domain += lb.domain / n;
      avg.trans += lb.trans / n;
      avg.total += lb.total / n;
    }
    std::cout << "loss_band=" << fmt9(avg.band) << " loss_rgb=" << fmt9(avg.rgb)
              << " loss_spectral=" << fmt9(avg.spectral)
              << " loss_domain=" << fmt9(avg.domain)
              << " loss_trans=" << fmt9(avg.trans)
              << " loss_total=" << fmt9(avg.total) << "\n";
  }
  return 0;
}

int cmd_export_curves(const std::string& model_path, const std::string& domain,
                      const std::string& curves_path,
                      const std::string& out_response,
                      const std::string& seg_model_path,
                      const std::string& out_filters) {
  if (!model_path.empty() && !out_response.empty()) {
    const ResponseMatrix standard = load_curves_or_default(curves_path);
    Pipeline pipe = pipeline_from_checkpoint(model_path, standard);
    if (domain != "s" && domain != "m") {
      throw ValueError("export-curves: --domain must be s or m");
    }
    const EffectiveCamera cam =
        effective_camera(pipe, domain == "s" ? "cam_s" : "cam_m", nullptr);
    save_response_csv(out_response, effective_matrix(cam.rm));
    std::cout << "wrote " << out_response << "\n";
  }
  if (!seg_model_path.empty() && !out_filters.empty()) {
    const SegCheckpoint ck = load_seg_checkpoint(seg_model_path);
    export_filters_csv(out_filters, ck.fb);
    std::cout << "wrote " << out_filters << "\n";
  }
  if ((model_path.empty() || out_response.empty()) &&
      (seg_model_path.empty() || out_filters.empty())) {
    throw ValueError(
        "export-curves: nothing to do (pass --model/--out-response and/or "
        "--seg-model/--out-filters)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_threads_from_env();
  CLI::App app{"synthetic spectral imaging pipeline"};
  app.require_subcommand(1);

  std::string config_path, curves_path, out_path, preview_path, trace_path;
  std::string cube_path, input_path, model_path, db_path, domain = "m";
  std::string spectral_dir, material_dir, data_dir, pred_path, gt_path;
  std::string seg_model_path, out_response, out_filters;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int count = 8, size = 32, classes = 4, eval_classes = 0;
  double unlabeled_fraction = 0.25;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "seed override")
        ->each([&](const std::string&) { seed_given = true; });
  };

  auto* gen = app.add_subcommand("gen-synth", "generate synthetic scenes + db");
  add_common(gen);
  gen->add_option("--count", count, "number of scenes");
  gen->add_option("--size", size, "image side length");
  gen->add_option("--classes", classes, "number of material classes");
  gen->add_option("--unlabeled-fraction", unlabeled_fraction,
                  "fraction of pixels left unlabeled");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* sim = app.add_subcommand("simulate", "render a cube through the camera");
  add_common(sim);
  sim->add_option("--cube", cube_path, "input .hsc cube")->required();
  sim->add_option("--curves", curves_path, "response curve CSV");
  sim->add_option("--out", out_path, "output PFM")->required();
  sim->add_option("--preview", preview_path, "optional 8-bit PPM preview");

  auto* tr = app.add_subcommand("train", "train the recovery pipeline");
  add_common(tr);
  tr->add_option("--spectral-dir", spectral_dir, "dir with .hsc + _rgb_s.pfm")
      ->required();
  tr->add_option("--material-dir", material_dir, "dir with _rgb_m.pfm")
      ->required();
  tr->add_option("--curves", curves_path, "standard response curve CSV");
  tr->add_option("--out", out_path, "output checkpoint")->required();
  tr->add_option("--trace", trace_path, "per-step loss trace CSV");

  auto* rec = app.add_subcommand("recover", "recover a cube from an RGB image");
  add_common(rec);
  rec->add_option("--model", model_path, "recovery checkpoint")->required();
  rec->add_option("--input", input_path, "input PFM")->required();
  rec->add_option("--curves", curves_path, "standard response curve CSV");
  rec->add_option("--out", out_path, "output .hsc cube")->required();
  rec->add_option("--emit-camera", preview_path,
                  "prefix for effective camera files (<prefix>.cfg, "
                  "<prefix>_curves.csv)");
  rec->add_option("--domain", domain, "camera domain for --emit-camera (s|m)");

  auto* tseg = app.add_subcommand("train-seg", "train filters + classifier");
  add_common(tseg);
  tseg->add_option("--data-dir", data_dir, "dir with .hsc + _labels.pgm + db.csv")
      ->required();
  tseg->add_option("--db", db_path, "spectral db CSV (default: data-dir/db.csv)");
  tseg->add_option("--out", out_path, "output checkpoint")->required();

  auto* seg = app.add_subcommand("segment", "segment a cube");
  add_common(seg);
  seg->add_option("--cube", cube_path, "input .hsc cube")->required();
  seg->add_option("--model", model_path, "segmentation checkpoint")->required();
  seg->add_option("--db", db_path, "spectral db CSV")->required();
  seg->add_option("--out", out_path, "output PGM label map")->required();

  auto* ev = app.add_subcommand("eval", "metrics and loss table");
  add_common(ev);
  ev->add_option("--pred", pred_path, "predicted PGM");
  ev->add_option("--gt", gt_path, "ground-truth PGM");
  ev->add_option("--classes", eval_classes, "class count (0 = infer)");
  ev->add_option("--model", model_path, "recovery checkpoint for loss table");
  ev->add_option("--spectral-dir", spectral_dir, "spectral dataset dir");
  ev->add_option("--material-dir", material_dir, "material dataset dir");
  ev->add_option("--curves", curves_path, "standard response curve CSV");

  auto* exp = app.add_subcommand("export-curves", "write response/filter CSVs");
  add_common(exp);
  exp->add_option("--model", model_path, "recovery checkpoint");
  exp->add_option("--domain", domain, "camera domain (s|m)");
  exp->add_option("--curves", curves_path, "standard response curve CSV");
  exp->add_option("--out-response", out_response, "effective response CSV");
  exp->add_option("--seg-model", seg_model_path, "segmentation checkpoint");
  exp->add_option("--out-filters", out_filters, "filter bank CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc = config_path.empty() ? default_config()
                                       : parse_config(config_path);
    if (seed_given) rc.seed = seed;

    if (gen->parsed()) {
      SynthConfig sc;
      sc.count = count;
      sc.size = size;
      sc.classes = classes;
      sc.seed = rc.seed;
      sc.unlabeled_fraction = unlabeled_fraction;
      return cmd_gen_synth(sc, out_path);
    }
    if (sim->parsed()) {
      return cmd_simulate(cube_path, curves_path, rc, rc.seed, out_path,
                          preview_path);
    }
    if (tr->parsed()) {
      return cmd_train(spectral_dir, material_dir, curves_path, rc, out_path,
                       trace_path);
    }
    if (rec->parsed()) {
      return cmd_recover(model_path, input_path, curves_path, out_path,
                         preview_path, domain);
    }
    if (tseg->parsed()) {
      return cmd_train_seg(data_dir, db_path, rc, rc.seed, out_path);
    }
    if (seg->parsed()) {
      return cmd_segment(cube_path, model_path, db_path, out_path);
    }
    if (ev->parsed()) {
      return cmd_eval(pred_path, gt_path, eval_classes, model_path,
                      spectral_dir, material_dir, curves_path, rc);
    }
    if (exp->parsed()) {
      return cmd_export_curves(model_path, domain, curves_path, out_response,
                               seg_model_path, out_filters);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
