// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/trainer.hpp"

#include <chrono>
#include <mutex>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mmnerf/error.hpp"
#include "mmnerf/parallel.hpp"
#include "mmnerf/random.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mmnerf {

namespace {

// Training allocates and frees the same multi-megabyte temporaries every
// chunk; keep them on the heap instead of round-tripping through mmap.
void retain_freed_memory() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

}  // namespace

void validate(const LossWeights& w) {
  if (!(w.color >= 0.0) || !(w.modality >= 0.0)) throw DomainError("loss weights must be non-negative");
  if (w.color == 0.0 && w.modality == 0.0) throw DomainError("loss weights cannot both be zero");
}

double loss_color(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.size() % 3 != 0) throw DimensionError("color batch shape mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - gt[i];
    sum += r * r;
  }
  return sum;
}

double loss_modality(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw DimensionError("modality batch shape mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - gt[i];
    sum += r * r;
  }
  return sum;
}

double loss_combined(double loss_c, double loss_t, const LossWeights& w) {
  validate(w);
  return w.color * loss_c + w.modality * loss_t;
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, OptimizerState<T>& state, const AdamConfig& cfg,
               std::span<const Segment> segments) {
  if (params.size() != grads.size()) throw DimensionError("parameter and gradient sizes differ");
  if (state.m.empty()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter vector");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grads[i]))) {
      std::string where = "index " + std::to_string(i);
      for (const auto& s : segments)
        if (i >= s.offset && i < s.offset + s.size) where = s.name;
      throw NumericError("non-finite gradient in segment " + where);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  for (size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m[i] / bc1;
    const T v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
BatchLoss evaluate_batch(const FieldModel<T>& model, const RayBatch& batch, size_t begin, size_t end,
                         const Objective& objective, std::span<T> grad) {
  if (end > batch.size() || begin > end) throw DimensionError("ray range outside the batch");
  if (objective.color && batch.rgb.size() != batch.size()) throw DimensionError("missing RGB targets");
  if (objective.modality && batch.modality.size() != batch.size()) throw DimensionError("missing modality targets");
  if (batch.mode == SamplingMode::kStratified && batch.sample_seeds.size() != batch.size()) {
    throw DimensionError("missing per-ray sampling seeds");
  }
  const int V = model.value_channels();
  const bool replicated = V == 3;  // 3-channel head regressing the modality
  if (objective.color && objective.modality && replicated) {
    throw DomainError("a 3-channel model cannot be supervised on color and modality at once");
  }
  if (objective.color && !model.renders_color()) throw DomainError("model does not render color");
  if (objective.modality && !model.renders_modality()) throw DomainError("model does not render the modality");
  const double wc = objective.color && objective.modality ? objective.weights.color : 1.0;
  const double wt = objective.color && objective.modality ? objective.weights.modality : 1.0;
  const int n = batch.samples_per_ray;
  const bool backward = !grad.empty();

  BatchLoss loss;
  std::vector<size_t> hit;
  for (size_t r = begin; r < end; ++r) {
    if (batch.rays[r].hits()) {
      hit.push_back(r);
      continue;
    }
    // Missed rays render as black / zero and carry no gradient.
    if (objective.color)
      for (int c = 0; c < 3; ++c) loss.color += batch.rgb[r][c] * batch.rgb[r][c];
    if (objective.modality) loss.modality += batch.modality[r] * batch.modality[r];
  }

  if (!hit.empty()) {
    const int M = static_cast<int>(hit.size()) * n;
    FieldBatch<T> b;
    b.positions.resize(3, M);
    b.dir_features.resize(model.config.encoding.direction_dim(), M);
    std::vector<T> ts(M), deltas(M);
    for (size_t h = 0; h < hit.size(); ++h) {
      const Ray& ray = batch.rays[hit[h]];
      Rng rng(batch.mode == SamplingMode::kStratified ? batch.sample_seeds[hit[h]] : 0);
      T* t = ts.data() + h * n;
      sample_interval<T>(static_cast<T>(ray.t_near), static_cast<T>(ray.t_far), n, batch.mode, &rng, t,
                         deltas.data() + h * n);
      const T d[3] = {static_cast<T>(ray.direction[0]), static_cast<T>(ray.direction[1]),
                      static_cast<T>(ray.direction[2])};
      T dir_feat[16];
      encode_direction(d, model.config.encoding.direction_degree, dir_feat);
      for (int i = 0; i < n; ++i) {
        const int m = static_cast<int>(h) * n + i;
        for (int a = 0; a < 3; ++a) b.positions(a, m) = static_cast<T>(ray.origin[a]) + t[i] * d[a];
        for (int k = 0; k < b.dir_features.rows(); ++k) b.dir_features(k, m) = dir_feat[k];
      }
    }
    field_forward_batch(model, b);

    FieldUpstream<T> up;
    if (backward) {
      up.d_sigma_color.assign(M, T(0));
      if (objective.modality) up.d_sigma_modality.assign(M, T(0));
      up.d_values = MatrixX<T>::Zero(V, M);
    }

    for (size_t h = 0; h < hit.size(); ++h) {
      const size_t r = hit[h];
      const size_t off = h * n;
      const T* sig = b.sigma.data() + off;
      const T* dl = deltas.data() + off;
      const T* tt = ts.data() + off;
      const T* vals = b.values.data() + off * V;

      if (objective.color) {
        const auto out = composite_strided<T>(n, sig, dl, tt, vals, V, 0, 3);
        T d_val[3];
        for (int c = 0; c < 3; ++c) {
          const double res = static_cast<double>(out.value[c]) - batch.rgb[r][c];
          loss.color += res * res;
          d_val[c] = static_cast<T>(wc * 2.0 * res);
        }
        if (backward) {
          composite_strided_backward<T>(n, sig, dl, tt, vals, V, 0, 3, d_val, T(0), T(0),
                                        up.d_sigma_color.data() + off, up.d_values.data() + off * V);
        }
      }
      if (objective.modality) {
        const double target = batch.modality[r];
        if (replicated) {
          const auto out = composite_strided<T>(n, sig, dl, tt, vals, V, 0, 3);
          T d_val[3];
          for (int c = 0; c < 3; ++c) {
            const double res = static_cast<double>(out.value[c]) - target;
            loss.modality += res * res / 3.0;
            d_val[c] = static_cast<T>(wt * 2.0 * res / 3.0);
          }
          if (backward) {
            composite_strided_backward<T>(n, sig, dl, tt, vals, V, 0, 3, d_val, T(0), T(0),
                                          up.d_sigma_modality.data() + off, up.d_values.data() + off * V);
          }
        } else {
          const int ch = model.modality_channel();
          const auto out = composite_strided<T>(n, sig, dl, tt, vals, V, ch, 1);
          const double res = static_cast<double>(out.value[0]) - target;
          loss.modality += res * res;
          const T d_val[1] = {static_cast<T>(wt * 2.0 * res)};
          if (backward) {
            composite_strided_backward<T>(n, sig, dl, tt, vals, V, ch, 1, d_val, T(0), T(0),
                                          up.d_sigma_modality.data() + off, up.d_values.data() + off * V);
          }
        }
      }
    }
    if (backward) field_backward_batch(model, b, up, grad);
  }
  loss.total = (objective.color ? wc * loss.color : 0.0) + (objective.modality ? wt * loss.modality : 0.0);
  return loss;
}

void validate(const TrainConfig& cfg) {
  if (cfg.iterations < 0 || cfg.ft_pretrain_iterations < 0 || cfg.ft_finetune_iterations < 0) {
    throw DomainError("iteration counts must be non-negative");
  }
  if (cfg.batch_rays < 1) throw DomainError("batch size must be positive");
  if (cfg.samples_per_ray < 1) throw DomainError("samples per ray must be positive");
  if (!(cfg.adam.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (cfg.deterministic_shards < 1 || cfg.chunk_rays < 1) throw DomainError("shard and chunk sizes must be positive");
  validate(cfg.weights);
  validate(cfg.model);
}

uint64_t primary_phase_seed(uint64_t seed) { return mix_seed(seed, 0x5052494d); }
uint64_t secondary_phase_seed(uint64_t seed) { return mix_seed(seed, 0x5345434f); }

RayBatch draw_batch(const SceneDataset& ds, std::span<const size_t> views, int batch_rays, int samples_per_ray,
                    uint64_t phase_seed, uint64_t iteration) {
  if (views.empty()) throw DomainError("no training views");
  Rng rng(mix_seed(phase_seed, iteration));
  RayBatch b;
  b.mode = SamplingMode::kStratified;
  b.samples_per_ray = samples_per_ray;
  b.rays.reserve(batch_rays);
  b.rgb.reserve(batch_rays);
  b.modality.reserve(batch_rays);
  b.sample_seeds.reserve(batch_rays);
  for (int r = 0; r < batch_rays; ++r) {
    const size_t view = views[rng.below(views.size())];
    const Camera& cam = ds.cameras[view];
    const int px = static_cast<int>(rng.below(static_cast<uint64_t>(cam.width)));
    const int py = static_cast<int>(rng.below(static_cast<uint64_t>(cam.height)));
    b.rays.push_back(pixel_to_ray(cam, px, py));
    const Image& rgb = ds.rgb_images[view];
    b.rgb.push_back({rgb.at(px, py, 0), rgb.at(px, py, 1), rgb.at(px, py, 2)});
    b.modality.push_back(ds.modality_images[view].at(px, py));
    b.sample_seeds.push_back(rng.next_u64());
  }
  return b;
}

void train_phase(TrainState& state, const SceneDataset& ds, std::span<const size_t> views, const Objective& objective,
                 int iterations, const TrainConfig& cfg, uint64_t phase_seed, const std::string& phase_name,
                 std::vector<TrainLogRow>& log, const TrainCallback& callback, std::vector<double>* step_losses) {
  retain_freed_memory();
  const size_t P = state.model.params.size();
  const int shards = cfg.deterministic ? cfg.deterministic_shards : std::max(1, thread_count());
  std::vector<std::vector<float>> shard_grads(shards, std::vector<float>(P));
  std::vector<BatchLoss> shard_loss(shards);
  std::vector<float> grad(P);
  const auto t0 = std::chrono::steady_clock::now();

  for (int it = 0; it < iterations; ++it) {
    const RayBatch batch = draw_batch(ds, views, cfg.batch_rays, cfg.samples_per_ray, phase_seed,
                                      static_cast<uint64_t>(it));
    const size_t B = batch.size();
    parallel_for(static_cast<size_t>(shards), [&](size_t s) {
      auto& g = shard_grads[s];
      std::fill(g.begin(), g.end(), 0.0f);
      BatchLoss acc;
      const size_t lo = B * s / shards, hi = B * (s + 1) / shards;
      for (size_t c = lo; c < hi; c += cfg.chunk_rays) {
        const size_t ce = std::min(hi, c + static_cast<size_t>(cfg.chunk_rays));
        const BatchLoss l = evaluate_batch<float>(state.model, batch, c, ce, objective, std::span<float>(g));
        acc.color += l.color;
        acc.modality += l.modality;
        acc.total += l.total;
      }
      shard_loss[s] = acc;
    });

    BatchLoss loss;
    std::copy(shard_grads[0].begin(), shard_grads[0].end(), grad.begin());
    loss = shard_loss[0];
    for (int s = 1; s < shards; ++s) {
      const auto& g = shard_grads[s];
      for (size_t i = 0; i < P; ++i) grad[i] += g[i];
      loss.color += shard_loss[s].color;
      loss.modality += shard_loss[s].modality;
      loss.total += shard_loss[s].total;
    }
    if (!std::isfinite(loss.total)) {
      std::ostringstream msg;
      msg << "non-finite loss in phase " << phase_name << " at iteration " << it << " (loss_c=" << loss.color
          << ", loss_t=" << loss.modality << ")";
      throw NumericError(msg.str());
    }
    adam_step<float>(std::span<float>(state.model.params), std::span<const float>(grad), state.optimizer, cfg.adam,
                     state.model.segments);
    state.iteration += 1;
    if (step_losses) step_losses->push_back(loss.total);

    const bool last = it + 1 == iterations;
    if (cfg.log_every > 0 && ((it + 1) % cfg.log_every == 0 || last)) {
      TrainLogRow row;
      row.iteration = it + 1;
      row.phase = phase_name;
      row.loss_c = objective.color ? loss.color : 0.0;
      row.loss_t = objective.modality ? loss.modality : 0.0;
      row.total = loss.total;
      row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log.push_back(row);
      if (callback) callback(row);
    }
  }
}

namespace {

TrainedModel finish(const TrainState& s, int color_steps, int modality_steps) {
  TrainedModel m;
  m.checkpoint.model = s.model;
  m.checkpoint.optimizer = s.optimizer;
  m.checkpoint.iteration = s.iteration;
  m.color_steps = color_steps;
  m.modality_steps = modality_steps;
  return m;
}

}  // namespace

TrainResult train(const SceneDataset& ds, Strategy strategy, const TrainConfig& cfg, std::span<const size_t> views,
                  const TrainCallback& callback) {
  validate(cfg);
  validate_dataset(ds);
  std::vector<size_t> all;
  if (views.empty()) {
    for (size_t i = 0; i < ds.size(); ++i) all.push_back(i);
    views = all;
  }
  for (size_t v : views)
    if (v >= ds.size()) throw DomainError("training view index out of range");

  const Objective color_only{true, false, {}};
  const Objective modality_only{false, true, {}};
  const Objective joint{true, true, cfg.weights};
  TrainResult res;

  switch (strategy) {
    case Strategy::kTS: {
      TrainState rgb{init_model<float>(cfg.model, Strategy::kTS, ModelRole::kRgb, cfg.seed), {}, 0};
      train_phase(rgb, ds, views, color_only, cfg.iterations, cfg, primary_phase_seed(cfg.seed), "ts-rgb", res.log,
                  callback);
      res.models.push_back(finish(rgb, cfg.iterations, 0));
      TrainState mod{init_model<float>(cfg.model, Strategy::kTS, ModelRole::kModality, mix_seed(cfg.seed, 1)), {}, 0};
      train_phase(mod, ds, views, modality_only, cfg.iterations, cfg, secondary_phase_seed(cfg.seed), "ts-modality",
                  res.log, callback);
      res.models.push_back(finish(mod, 0, cfg.iterations));
      break;
    }
    case Strategy::kFT: {
      TrainState st{init_model<float>(cfg.model, Strategy::kFT, ModelRole::kRgb, cfg.seed), {}, 0};
      train_phase(st, ds, views, color_only, cfg.ft_pretrain_iterations, cfg, primary_phase_seed(cfg.seed),
                  "ft-pretrain", res.log, callback);
      res.models.push_back(finish(st, cfg.ft_pretrain_iterations, 0));
      // Fine-tuning starts from the pre-trained weights with fresh Adam moments.
      st.model.role = ModelRole::kModality;
      st.optimizer = {};
      train_phase(st, ds, views, modality_only, cfg.ft_finetune_iterations, cfg, secondary_phase_seed(cfg.seed),
                  "ft-finetune", res.log, callback);
      res.models.push_back(finish(st, cfg.ft_pretrain_iterations, cfg.ft_finetune_iterations));
      break;
    }
    case Strategy::kRGBX:
    case Strategy::kSC: {
      const std::string name = strategy == Strategy::kRGBX ? "rgbx" : "sc";
      TrainState st{init_model<float>(cfg.model, strategy, ModelRole::kJoint, cfg.seed), {}, 0};
      train_phase(st, ds, views, joint, cfg.iterations, cfg, primary_phase_seed(cfg.seed), name, res.log, callback);
      res.models.push_back(finish(st, cfg.iterations, cfg.iterations));
      break;
    }
  }
  return res;
}

std::string format_train_log(std::span<const TrainLogRow> log) {
  std::string out = "iteration,phase,loss_c,loss_t,total,wall_seconds\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.3f\n", r.iteration, r.phase.c_str(), r.loss_c, r.loss_t,
                  r.total, r.wall_seconds);
    out += buf;
  }
  return out;
}

template void adam_step<float>(std::span<float>, std::span<const float>, OptimizerState<float>&, const AdamConfig&,
                               std::span<const Segment>);
template void adam_step<double>(std::span<double>, std::span<const double>, OptimizerState<double>&,
                                const AdamConfig&, std::span<const Segment>);
template BatchLoss evaluate_batch<float>(const FieldModel<float>&, const RayBatch&, size_t, size_t,
                                         const Objective&, std::span<float>);
template BatchLoss evaluate_batch<double>(const FieldModel<double>&, const RayBatch&, size_t, size_t,
                                          const Objective&, std::span<double>);

}  // namespace mmnerf
