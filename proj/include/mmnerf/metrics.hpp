// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmnerf/image.hpp"
#include "mmnerf/renderer.hpp"
#include "mmnerf/scene_io.hpp"
#include "mmnerf/trainer.hpp"

namespace mmnerf {

/// Reported for a zero mean squared error.
inline constexpr double kPsnrCap = 99.0;

/// Mean squared error over all channels of the pixels where mask > 0.5
/// (all pixels when mask is null). Throws DomainError for an empty mask.
double masked_mse(const Image& pred, const Image& gt, const Image* mask = nullptr);

/// -10 log10(MSE), capped at kPsnrCap.
double psnr(const Image& pred, const Image& gt, const Image* mask = nullptr);

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Gaussian-windowed SSIM over every fully contained window, averaged over the
/// windows whose center pixel is masked, then over channels.
double ssim(const Image& pred, const Image& gt, const Image* mask = nullptr, const SsimConfig& cfg = {});

struct ViewMetrics {
  double rgb_psnr = 0.0;
  double rgb_ssim = 0.0;
  double modality_psnr = 0.0;
  double modality_ssim = 0.0;
};

struct FoldResult {
  size_t fold = 0;
  size_t held_out = 0;
  ViewMetrics metrics;
};

struct EvalReport {
  std::string scene;
  Strategy strategy = Strategy::kTS;
  std::vector<FoldResult> folds;
  ViewMetrics mean;  // arithmetic means over folds
};

struct EvalOptions {
  bool use_masks = true;
  RenderOptions render;
};

/// `folds` evenly spaced held-out indices: floor((k + 0.5) * n / folds).
std::vector<size_t> held_out_indices(size_t n, size_t folds);

/// Renders one view with the trained models and scores both modalities.
ViewMetrics evaluate_view(std::span<const TrainedModel> models, const SceneDataset& ds, size_t view,
                          const EvalOptions& options);

ViewMetrics mean_metrics(std::span<const FoldResult> folds);

/// Trains once per fold on all views but the held-out one and scores the
/// held-out view. Throws DomainError when the dataset has no more views than folds.
EvalReport leave_one_out(const SceneDataset& ds, Strategy strategy, const TrainConfig& cfg, size_t folds,
                         const EvalOptions& options = {});

/// One row per fold.
std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);
/// scene x strategy x {PSNR, SSIM} per modality, one row per report.
std::string report_table_csv(std::span<const EvalReport> reports);

}  // namespace mmnerf
