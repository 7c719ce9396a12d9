// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "mmnerf/error.hpp"

namespace mmnerf {

namespace {

void check_pair(const Image& pred, const Image& gt, const Image* mask) {
  if (!pred.same_shape(gt)) throw DimensionError("metric inputs differ in shape");
  if (pred.empty()) throw DimensionError("metric inputs are empty");
  if (mask && (mask->width != pred.width || mask->height != pred.height || mask->channels != 1)) {
    throw DimensionError("mask does not match the image");
  }
}

}  // namespace

double masked_mse(const Image& pred, const Image& gt, const Image* mask) {
  check_pair(pred, gt, mask);
  double sum = 0.0;
  size_t count = 0;
  const int C = pred.channels;
  for (size_t p = 0; p < pred.pixel_count(); ++p) {
    if (mask && !(mask->data[p] > 0.5f)) continue;
    for (int c = 0; c < C; ++c) {
      const double d = static_cast<double>(pred.data[p * C + c]) - gt.data[p * C + c];
      sum += d * d;
    }
    count += C;
  }
  if (count == 0) throw DomainError("mask selects no pixels");
  return sum / static_cast<double>(count);
}

double psnr(const Image& pred, const Image& gt, const Image* mask) {
  const double mse = masked_mse(pred, gt, mask);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Image& pred, const Image& gt, const Image* mask, const SsimConfig& cfg) {
  check_pair(pred, gt, mask);
  if (cfg.window < 1 || cfg.window % 2 == 0) throw DomainError("SSIM window must be odd and positive");
  if (pred.width < cfg.window || pred.height < cfg.window) throw DimensionError("image is smaller than the SSIM window");
  const int r = cfg.window / 2;
  std::vector<double> g(cfg.window);
  double gs = 0.0;
  for (int i = 0; i < cfg.window; ++i) {
    g[i] = std::exp(-0.5 * (i - r) * (i - r) / (cfg.sigma * cfg.sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
  const int C = pred.channels;

  double total = 0.0;
  size_t windows = 0;
  std::vector<double> acc(C);
  for (int cy = r; cy < pred.height - r; ++cy) {
    for (int cx = r; cx < pred.width - r; ++cx) {
      if (mask && !(mask->at(cx, cy) > 0.5f)) continue;
      double per_window = 0.0;
      for (int c = 0; c < C; ++c) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const double w = g[dy + r] * g[dx + r];
            const double x = pred.at(cx + dx, cy + dy, c), y = gt.at(cx + dx, cy + dy, c);
            mx += w * x;
            my += w * y;
            sxx += w * x * x;
            syy += w * y * y;
            sxy += w * x * y;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        per_window += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
      total += per_window / C;
      ++windows;
    }
  }
  if (windows == 0) throw DomainError("mask selects no SSIM window");
  return total / static_cast<double>(windows);
}

std::vector<size_t> held_out_indices(size_t n, size_t folds) {
  if (folds == 0) throw DomainError("fold count must be positive");
  if (n <= folds) throw DomainError("dataset of " + std::to_string(n) + " views is too small for " +
                                    std::to_string(folds) + " folds");
  std::vector<size_t> out;
  for (size_t k = 0; k < folds; ++k) {
    out.push_back(static_cast<size_t>(std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(n) /
                                                 static_cast<double>(folds))));
  }
  return out;
}

ViewMetrics evaluate_view(std::span<const TrainedModel> models, const SceneDataset& ds, size_t view,
                          const EvalOptions& options) {
  if (view >= ds.size()) throw DomainError("view index out of range");
  const TrainedModel* color = nullptr;
  const TrainedModel* modality = nullptr;
  for (const auto& m : models) {
    if (!color && m.checkpoint.model.renders_color()) color = &m;
    if (m.checkpoint.model.renders_modality()) modality = &m;
  }
  if (!color || !modality) throw DomainError("models do not cover both modalities");
  const Image* mask = options.use_masks && ds.has_masks() ? &ds.masks[view] : nullptr;
  const Camera& cam = ds.cameras[view];

  ViewMetrics vm;
  RenderedImages rc = render_image(color->checkpoint.model, cam, options.render);
  vm.rgb_psnr = psnr(rc.color, ds.rgb_images[view], mask);
  vm.rgb_ssim = ssim(rc.color, ds.rgb_images[view], mask);
  RenderedImages rm = modality == color ? std::move(rc) : render_image(modality->checkpoint.model, cam, options.render);
  vm.modality_psnr = psnr(rm.modality, ds.modality_images[view], mask);
  vm.modality_ssim = ssim(rm.modality, ds.modality_images[view], mask);
  return vm;
}

ViewMetrics mean_metrics(std::span<const FoldResult> folds) {
  ViewMetrics m;
  if (folds.empty()) return m;
  for (const auto& f : folds) {
    m.rgb_psnr += f.metrics.rgb_psnr;
    m.rgb_ssim += f.metrics.rgb_ssim;
    m.modality_psnr += f.metrics.modality_psnr;
    m.modality_ssim += f.metrics.modality_ssim;
  }
  const double n = static_cast<double>(folds.size());
  m.rgb_psnr /= n;
  m.rgb_ssim /= n;
  m.modality_psnr /= n;
  m.modality_ssim /= n;
  return m;
}

EvalReport leave_one_out(const SceneDataset& ds, Strategy strategy, const TrainConfig& cfg, size_t folds,
                         const EvalOptions& options) {
  const auto held = held_out_indices(ds.size(), folds);
  EvalReport report;
  report.scene = ds.name;
  report.strategy = strategy;
  for (size_t k = 0; k < held.size(); ++k) {
    std::vector<size_t> views;
    for (size_t i = 0; i < ds.size(); ++i)
      if (i != held[k]) views.push_back(i);
    const TrainResult tr = train(ds, strategy, cfg, views);
    report.folds.push_back({k, held[k], evaluate_view(tr.models, ds, held[k], options)});
  }
  report.mean = mean_metrics(report.folds);
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "scene,strategy,fold,held_out,rgb_psnr,rgb_ssim,modality_psnr,modality_ssim\n";
  char buf[512];
  for (const auto& f : report.folds) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n", report.scene.c_str(),
                  to_string(report.strategy).c_str(), f.fold, f.held_out, f.metrics.rgb_psnr, f.metrics.rgb_ssim,
                  f.metrics.modality_psnr, f.metrics.modality_ssim);
    out += buf;
  }
  return out;
}

namespace {

nlohmann::json metrics_json(const ViewMetrics& m) {
  return {{"rgb_psnr", m.rgb_psnr},
          {"rgb_ssim", m.rgb_ssim},
          {"modality_psnr", m.modality_psnr},
          {"modality_ssim", m.modality_ssim}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"fold", f.fold}, {"held_out", f.held_out}, {"metrics", metrics_json(f.metrics)}});
  }
  nlohmann::json j = {{"scene", report.scene},
                      {"strategy", to_string(report.strategy)},
                      {"folds", std::move(folds)},
                      {"mean", metrics_json(report.mean)}};
  return j.dump(2) + "\n";
}

std::string report_table_csv(std::span<const EvalReport> reports) {
  std::string out = "scene,strategy,rgb_psnr,rgb_ssim,modality_psnr,modality_ssim\n";
  char buf[512];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%.4f,%.4f\n", r.scene.c_str(), to_string(r.strategy).c_str(),
                  r.mean.rgb_psnr, r.mean.rgb_ssim, r.mean.modality_psnr, r.mean.modality_ssim);
    out += buf;
  }
  return out;
}

}  // namespace mmnerf
