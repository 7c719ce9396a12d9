// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0
//
// mmnerf: synthesize scenes, calibrate, train, evaluate and render two-modality
// radiance fields.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmnerf/calibration.hpp"
#include "mmnerf/checkpoint.hpp"
#include "mmnerf/error.hpp"
#include "mmnerf/metrics.hpp"
#include "mmnerf/scene_io.hpp"
#include "mmnerf/synth.hpp"
#include "mmnerf/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmnerf;

namespace {

struct TrainFlags {
  std::string scene;
  std::string strategy = "ts";
  std::string modality;
  std::optional<int> iterations;
  std::optional<int> pretrain_iterations;
  std::optional<int> finetune_iterations;
  int batch_rays = 4096;
  int samples = 128;
  double lr = 0.01;
  double wc = 1.0;
  double wt = 1.0;
  uint64_t seed = 0;
  bool deterministic = false;
  int log_every = 100;
  int eval_samples = 128;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--scene", f.scene, "Scene manifest (JSON)")->required();
  cmd->add_option("--strategy", f.strategy, "Fusion strategy: ts, ft, rgbx or sc");
  cmd->add_option("--modality", f.modality, "Expected second modality: thermal, nir or depth");
  cmd->add_option("--iterations", f.iterations, "Iterations per model (FT: split 60/40 unless given)");
  cmd->add_option("--pretrain-iterations", f.pretrain_iterations, "FT RGB pre-training iterations");
  cmd->add_option("--finetune-iterations", f.finetune_iterations, "FT modality fine-tuning iterations");
  cmd->add_option("--batch-rays", f.batch_rays, "Rays per batch");
  cmd->add_option("--samples", f.samples, "Samples per ray during training");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--wc", f.wc, "Color loss weight");
  cmd->add_option("--wt", f.wt, "Modality loss weight");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_flag("--deterministic", f.deterministic, "Fixed-shard ordered gradient reduction");
  cmd->add_option("--log-every", f.log_every, "Training log interval");
}

TrainConfig make_train_config(const TrainFlags& f) {
  TrainConfig cfg;
  if (f.iterations) {
    cfg.iterations = *f.iterations;
    cfg.ft_pretrain_iterations = *f.iterations * 6 / 10;
    cfg.ft_finetune_iterations = *f.iterations - cfg.ft_pretrain_iterations;
  }
  if (f.pretrain_iterations) cfg.ft_pretrain_iterations = *f.pretrain_iterations;
  if (f.finetune_iterations) cfg.ft_finetune_iterations = *f.finetune_iterations;
  cfg.batch_rays = f.batch_rays;
  cfg.samples_per_ray = f.samples;
  cfg.adam.learning_rate = f.lr;
  cfg.weights = {f.wc, f.wt};
  cfg.seed = f.seed;
  cfg.deterministic = f.deterministic;
  cfg.log_every = f.log_every;
  validate(cfg);
  return cfg;
}

SceneDataset load_checked(const TrainFlags& f) {
  SceneDataset ds = load_scene(f.scene);
  if (!f.modality.empty() && parse_modality(f.modality) != ds.modality) {
    throw DomainError("scene holds " + to_string(ds.modality) + " data, not " + f.modality);
  }
  return ds;
}

std::vector<std::string> checkpoint_names(Strategy s) {
  switch (s) {
    case Strategy::kTS:
      return {"ts_rgb.ckpt", "ts_modality.ckpt"};
    case Strategy::kFT:
      return {"ft_pretrain.ckpt", "ft_finetune.ckpt"};
    case Strategy::kRGBX:
      return {"rgbx.ckpt"};
    case Strategy::kSC:
      return {"sc.ckpt"};
  }
  return {};
}

void print_row(const TrainLogRow& r) {
  std::fprintf(stderr, "[%s] iter %d  loss_c %.5g  loss_t %.5g  total %.5g  (%.1fs)\n", r.phase.c_str(), r.iteration,
               r.loss_c, r.loss_t, r.total, r.wall_seconds);
}

int cmd_synth(const std::string& layout, int views, int width, int height, const std::string& modality, uint64_t seed,
              double noise, int quadrature, bool no_masks, const std::string& out) {
  SynthOptions o;
  if (layout == "forward" || layout == "forward-facing") {
    o.layout = Layout::kForwardFacing;
  } else if (layout == "orbit360" || layout == "360") {
    o.layout = Layout::kOrbit360;
  } else {
    throw DomainError("unknown layout '" + layout + "' (forward or orbit360)");
  }
  o.n_views = views;
  o.width = width;
  o.height = height;
  o.modality = parse_modality(modality);
  o.seed = seed;
  o.noise_sigma = noise;
  o.quadrature_n = quadrature;
  o.masks = !no_masks;
  const SceneDataset ds = make_dataset(default_scene(), o);
  const fs::path manifest = save_scene(ds, out);
  std::cout << manifest.string() << "\n";
  return 0;
}

int cmd_calibrate(const std::string& csv, const std::vector<std::string>& rgb_images,
                  const std::vector<std::string>& modality_images, double threshold, int min_area, bool invert,
                  const std::string& out) {
  HomographyFit fit;
  size_t count = 0;
  if (!csv.empty()) {
    const CorrespondenceSet pairs = read_correspondences_csv(csv);
    fit = estimate_homography(pairs);
    count = pairs.size();
  } else {
    if (rgb_images.empty() || rgb_images.size() != modality_images.size()) {
      throw DomainError("give --csv, or matching --rgb-image and --modality-image lists");
    }
    std::vector<Homography> hs;
    CorrespondenceSet all;
    for (size_t i = 0; i < rgb_images.size(); ++i) {
      const Image a = extract_channel(read_image(rgb_images[i]), 0);
      const Image b = extract_channel(read_image(modality_images[i]), 0);
      const auto pa = detect_midpoints(a, threshold, min_area, invert);
      const auto pb = detect_midpoints(b, threshold, min_area, invert);
      const CorrespondenceSet pairs = match_grids(pa, pb);
      hs.push_back(estimate_homography(pairs).homography);
      all.insert(all.end(), pairs.begin(), pairs.end());
    }
    fit.homography = hs.size() == 1 ? hs[0] : average_homographies(hs);
    fit.rms_error = rms_reprojection_error(fit.homography, all);
    count = all.size();
  }
  atomic_write(out, homography_json(fit, count));
  std::fprintf(stderr, "%zu correspondences, RMS reprojection error %.4f px\n", count, fit.rms_error);
  return 0;
}

int cmd_train(const TrainFlags& f, bool sweep, size_t sweep_folds, const std::string& out) {
  const SceneDataset ds = load_checked(f);
  const Strategy strategy = parse_strategy(f.strategy);
  TrainConfig cfg = make_train_config(f);
  fs::create_directories(out);

  if (sweep) {
    if (strategy != Strategy::kRGBX && strategy != Strategy::kSC) {
      throw DomainError("the loss-weight sweep needs a joint strategy (rgbx or sc)");
    }
    EvalOptions eo;
    eo.render.samples_per_ray = f.eval_samples;
    std::string csv = "wc,wt,folds,rgb_psnr,rgb_ssim,modality_psnr,modality_ssim\n";
    for (int k = 0; k <= 10; ++k) {
      cfg.weights = {k / 10.0, 1.0 - k / 10.0};
      const EvalReport rep = leave_one_out(ds, strategy, cfg, sweep_folds, eo);
      const ViewMetrics& m = rep.mean;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%.1f,%.1f,%zu,%.6f,%.6f,%.6f,%.6f\n", cfg.weights.color, cfg.weights.modality,
                    sweep_folds, m.rgb_psnr, m.rgb_ssim, m.modality_psnr, m.modality_ssim);
      csv += buf;
      std::fprintf(stderr, "wc=%.1f  rgb %.2f dB  modality %.2f dB\n", cfg.weights.color, m.rgb_psnr,
                   m.modality_psnr);
    }
    atomic_write(fs::path(out) / "sweep.csv", csv);
    return 0;
  }

  const TrainResult tr = train(ds, strategy, cfg, {}, print_row);
  const auto names = checkpoint_names(strategy);
  for (size_t i = 0; i < tr.models.size(); ++i) save_checkpoint(tr.models[i].checkpoint, fs::path(out) / names[i]);
  atomic_write(fs::path(out) / "train_log.csv", format_train_log(tr.log));
  for (const auto& n : names) std::cout << (fs::path(out) / n).string() << "\n";
  return 0;
}

int cmd_eval(const TrainFlags& f, size_t folds, bool no_mask, const std::string& out) {
  const SceneDataset ds = load_checked(f);
  const Strategy strategy = parse_strategy(f.strategy);
  const TrainConfig cfg = make_train_config(f);
  EvalOptions eo;
  eo.use_masks = !no_mask;
  eo.render.samples_per_ray = f.eval_samples;
  const EvalReport report = leave_one_out(ds, strategy, cfg, folds, eo);
  fs::create_directories(out);
  atomic_write(fs::path(out) / "report.csv", report_csv(report));
  atomic_write(fs::path(out) / "report.json", report_json(report));
  std::fprintf(stderr, "%s %s: RGB %.2f dB / %.4f, modality %.2f dB / %.4f\n", report.scene.c_str(),
               to_string(strategy).c_str(), report.mean.rgb_psnr, report.mean.rgb_ssim, report.mean.modality_psnr,
               report.mean.modality_ssim);
  return 0;
}

Image tone_map(const Image& img) {
  float mx = 0.0f;
  for (float v : img.data) mx = std::max(mx, v);
  Image out = img;
  if (mx > 0.0f)
    for (float& v : out.data) v /= mx;
  return out;
}

int cmd_render(const std::vector<std::string>& checkpoints, const std::string& scene, std::vector<size_t> views,
               int samples, bool normalize_depth, const std::string& out) {
  const SceneDataset ds = load_scene(scene);
  if (views.empty())
    for (size_t i = 0; i < ds.size(); ++i) views.push_back(i);
  std::vector<ModelCheckpoint> models;
  for (const auto& c : checkpoints) models.push_back(load_checkpoint(c));
  const FieldModel<float>* color = nullptr;
  const FieldModel<float>* modality = nullptr;
  for (const auto& m : models) {
    if (!color && m.model.renders_color()) color = &m.model;
    if (m.model.renders_modality()) modality = &m.model;
  }
  RenderOptions ro;
  ro.samples_per_ray = samples;
  ro.normalize_depth = normalize_depth;
  fs::create_directories(out);
  for (size_t v : views) {
    if (v >= ds.size()) throw DomainError("view " + std::to_string(v) + " out of range");
    char stem[32];
    std::snprintf(stem, sizeof stem, "view_%03zu_", v);
    const fs::path base = fs::path(out) / stem;
    const FieldModel<float>& geo = color ? *color : *modality;
    const RenderedImages r = render_image(geo, ds.cameras[v], ro);
    if (color) write_png(base.string() + "color.png", r.color);
    if (modality) {
      const RenderedImages rm = modality == &geo ? r : render_image(*modality, ds.cameras[v], ro);
      Image raw = rm.modality;
      for (float& p : raw.data) p = static_cast<float>(p * ds.modality_scale);
      write_pfm(base.string() + "modality.pfm", raw);
      write_png(base.string() + "modality.png", rm.modality);
    }
    write_pfm(base.string() + "depth.pfm", r.depth);
    write_png(base.string() + "depth.png", tone_map(r.depth));
    write_png(base.string() + "accumulation.png", r.accumulation);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-modality neural radiance fields"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-modality scene");
  std::string layout = "forward", synth_modality = "thermal", synth_out;
  int views = 30, width = 64, height = 64, quadrature = 1024;
  uint64_t synth_seed = 0;
  double noise = 0.0;
  bool no_masks = false;
  synth->add_option("--layout", layout, "forward or orbit360");
  synth->add_option("--views", views, "Number of views");
  synth->add_option("--width", width, "Image width");
  synth->add_option("--height", height, "Image height");
  synth->add_option("--modality", synth_modality, "thermal, nir or depth");
  synth->add_option("--seed", synth_seed, "Noise seed");
  synth->add_option("--noise", noise, "Gaussian pixel noise sigma");
  synth->add_option("--quadrature", quadrature, "Oracle samples per ray");
  synth->add_flag("--no-masks", no_masks, "Do not emit object masks");
  synth->add_option("--out", synth_out, "Output scene directory")->required();

  auto* calib = app.add_subcommand("calibrate", "Estimate the RGB-to-modality homography");
  std::string csv, calib_out;
  std::vector<std::string> rgb_images, modality_images;
  double threshold = 0.5;
  int min_area = 5;
  bool invert = false;
  auto* csv_opt = calib->add_option("--csv", csv, "Correspondences x,y,x',y'");
  auto* rgb_opt = calib->add_option("--rgb-image", rgb_images, "Calibration target seen by the RGB camera");
  calib->add_option("--modality-image", modality_images, "Calibration target seen by the second camera");
  csv_opt->excludes(rgb_opt);
  calib->add_option("--threshold", threshold, "Blob threshold in [0,1]");
  calib->add_option("--min-area", min_area, "Minimum blob area in pixels");
  calib->add_flag("--invert", invert, "Blobs are darker than the plate");
  calib->add_option("--out", calib_out, "Output homography JSON")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a fusion strategy on a scene");
  TrainFlags train_flags;
  std::string train_out;
  bool sweep = false;
  size_t sweep_folds = 1;
  add_train_flags(train_cmd, train_flags);
  train_cmd->add_flag("--sweep-wc", sweep, "Sweep wc over 0,0.1,...,1 with wt = 1 - wc; writes sweep.csv");
  train_cmd->add_option("--eval-samples", train_flags.eval_samples, "Samples per ray when scoring the sweep");
  train_cmd->add_option("--sweep-folds", sweep_folds, "Held-out views averaged per sweep point");
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Leave-one-out evaluation");
  TrainFlags eval_flags;
  std::string eval_out;
  size_t folds = 10;
  bool no_mask = false;
  add_train_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--folds", folds, "Number of held-out views");
  eval_cmd->add_flag("--no-mask", no_mask, "Score whole images instead of object masks");
  eval_cmd->add_option("--eval-samples", eval_flags.eval_samples, "Samples per ray when rendering");
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();

  auto* render = app.add_subcommand("render", "Render color, modality, depth and accumulation images");
  std::vector<std::string> checkpoints;
  std::string render_scene, render_out;
  std::vector<size_t> render_views;
  int render_samples = 128;
  bool normalize_depth = false;
  render->add_option("--checkpoint", checkpoints, "One joint or two separate checkpoints")->required();
  render->add_option("--scene", render_scene, "Scene manifest providing the cameras")->required();
  render->add_option("--view", render_views, "View indices (default: all)");
  render->add_option("--samples", render_samples, "Samples per ray");
  render->add_flag("--normalize-depth", normalize_depth, "Divide depth by accumulation");
  render->add_option("--out", render_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth(layout, views, width, height, synth_modality, synth_seed, noise, quadrature, no_masks,
                       synth_out);
    }
    if (calib->parsed()) {
      return cmd_calibrate(csv, rgb_images, modality_images, threshold, min_area, invert, calib_out);
    }
    if (train_cmd->parsed()) return cmd_train(train_flags, sweep, sweep_folds, train_out);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags, folds, no_mask, eval_out);
    if (render->parsed()) {
      return cmd_render(checkpoints, render_scene, render_views, render_samples, normalize_depth, render_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
