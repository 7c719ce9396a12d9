// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmnerf/checkpoint.hpp"
#include "mmnerf/field.hpp"
#include "mmnerf/renderer.hpp"
#include "mmnerf/scene_io.hpp"

namespace mmnerf {

struct LossWeights {
  double color = 1.0;
  double modality = 1.0;
};

void validate(const LossWeights& w);

/// Sum over rays of the squared color error; 3 values per ray.
double loss_color(std::span<const double> pred, std::span<const double> gt);
/// Sum over rays of the squared modality error.
double loss_modality(std::span<const double> pred, std::span<const double> gt);
double loss_combined(double loss_c, double loss_t, const LossWeights& w);

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Throws NumericError naming the segment when a gradient
/// entry is not finite; parameters and state are left untouched in that case.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, OptimizerState<T>& state,
               const AdamConfig& cfg, std::span<const Segment> segments);

/// Losses applied in a training phase.
struct Objective {
  bool color = true;
  bool modality = false;
  LossWeights weights;
};

/// A batch of supervised rays. Targets for unused losses may be left empty.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<std::array<double, 3>> rgb;
  std::vector<double> modality;
  std::vector<uint64_t> sample_seeds;  // per-ray stratification streams
  SamplingMode mode = SamplingMode::kStratified;
  int samples_per_ray = 128;

  size_t size() const { return rays.size(); }
};

struct BatchLoss {
  double color = 0.0;
  double modality = 0.0;
  double total = 0.0;
};

/// Renders rays [begin, end) of the batch, evaluates the objective and, when
/// `grad` is non-empty, accumulates d(total)/d(params) into it.
///
/// A 3-channel model supervised on the modality regresses the value replicated
/// over its channels (per-ray term: mean over channels of the squared error) and
/// reads it back from channel 0. Models with a fourth channel use it directly.
template <typename T>
BatchLoss evaluate_batch(const FieldModel<T>& model, const RayBatch& batch, size_t begin, size_t end,
                         const Objective& objective, std::span<T> grad);

struct TrainConfig {
  int iterations = 10000;
  int ft_pretrain_iterations = 6000;
  int ft_finetune_iterations = 4000;
  int batch_rays = 4096;
  int samples_per_ray = 128;
  AdamConfig adam;
  LossWeights weights;
  uint64_t seed = 0;
  /// Fixed gradient-shard count with ordered reduction, independent of the
  /// thread count. Off: one shard per worker thread.
  bool deterministic = false;
  int deterministic_shards = 4;
  int chunk_rays = 128;
  int log_every = 100;
  ModelConfig model;
};

void validate(const TrainConfig& cfg);

struct TrainLogRow {
  int iteration = 0;
  std::string phase;
  double loss_c = 0.0;
  double loss_t = 0.0;
  double total = 0.0;
  double wall_seconds = 0.0;
};

struct TrainedModel {
  ModelCheckpoint checkpoint;
  int color_steps = 0;     // iterations that supervised color
  int modality_steps = 0;  // iterations that supervised the modality
};

struct TrainResult {
  std::vector<TrainedModel> models;  // TS/FT: {rgb, modality}; RGBX/SC: {joint}
  std::vector<TrainLogRow> log;
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

/// Mutable single-model training state.
struct TrainState {
  FieldModel<float> model;
  OptimizerState<float> optimizer;
  uint64_t iteration = 0;
};

/// Draws the ray batch of one iteration: uniform over all pixels of the given
/// views. Paired targets (RGB and modality at the same pixel) are always filled.
RayBatch draw_batch(const SceneDataset& ds, std::span<const size_t> views, int batch_rays,
                    int samples_per_ray, uint64_t phase_seed, uint64_t iteration);

/// Runs `iterations` optimizer steps of one phase. Aborts with NumericError on a
/// non-finite loss. Returns per-step losses (every step) through `log_every`
/// sampled rows appended to `log`.
void train_phase(TrainState& state, const SceneDataset& ds, std::span<const size_t> views,
                 const Objective& objective, int iterations, const TrainConfig& cfg,
                 uint64_t phase_seed, const std::string& phase_name, std::vector<TrainLogRow>& log,
                 const TrainCallback& callback = {}, std::vector<double>* step_losses = nullptr);

/// Trains a strategy on the given views (all views when empty).
TrainResult train(const SceneDataset& ds, Strategy strategy, const TrainConfig& cfg,
                  std::span<const size_t> views = {}, const TrainCallback& callback = {});

/// Phase seeds. The first RGB-supervised phase of every strategy shares one seed,
/// so SC and an RGB-only run see the same ray schedule.
uint64_t primary_phase_seed(uint64_t seed);
uint64_t secondary_phase_seed(uint64_t seed);

std::string format_train_log(std::span<const TrainLogRow> log);

}  // namespace mmnerf
