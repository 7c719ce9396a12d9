// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "mmnerf/field.hpp"
#include "mmnerf/geometry.hpp"
#include "mmnerf/image.hpp"
#include "mmnerf/random.hpp"

namespace mmnerf {

enum class SamplingMode { kUniform, kStratified };

/// Samples along one ray. deltas[i] = ts[i+1] - ts[i]; the last spacing runs to t_far.
struct RaySampleSet {
  std::vector<double> ts;
  std::vector<double> deltas;
  std::vector<Vec3> positions;

  size_t size() const { return ts.size(); }
};

/// Uniform: t_i = t_near + (i + 0.5) / n * (t_far - t_near).
/// Stratified: one uniform draw inside each of the n equal bins.
RaySampleSet sample_ray(const Ray& ray, int n, SamplingMode mode, Rng* rng = nullptr);

/// Sample distances only, written to `ts`/`deltas` (length n). Shared by the
/// batched paths; `rng` may be null for uniform sampling.
template <typename T>
void sample_interval(T t_near, T t_far, int n, SamplingMode mode, Rng* rng, T* ts, T* deltas);

enum class Channel { kColor, kModality };

struct RenderResult {
  std::vector<double> value;    // 3 for color, 1 for modality
  double depth = 0.0;           // sum w_i t_i
  double accumulation = 0.0;    // sum w_i
  double transmittance = 1.0;   // T_{N+1}
  std::vector<double> weights;  // w_i
  std::vector<double> transmittances;  // T_i, i = 1..N
};

/// Volume-rendering quadrature: value = sum_i T_i (1 - exp(-sigma_i delta_i)) v_i
/// with T_i = exp(-sum_{j<i} sigma_j delta_j).
RenderResult composite(const RaySampleSet& samples, std::span<const FieldOutput> outputs, Channel channel);

/// Strided form used in the batched pipeline. `values` holds n rows of
/// `value_stride` scalars, of which `channels` consecutive ones starting at
/// `value_offset` are composited.
template <typename T>
struct CompositeOut {
  T value[4] = {};
  T depth = 0;
  T accumulation = 0;
  T transmittance = 1;
};

template <typename T>
CompositeOut<T> composite_strided(int n, const T* sigma, const T* deltas, const T* ts,
                                  const T* values, int value_stride, int value_offset, int channels,
                                  T* weights_out = nullptr);

/// Gradient of a scalar loss through the compositor. `d_value` has `channels`
/// entries, `d_accumulation` and `d_depth` are scalars. Writes d_sigma (length
/// n, accumulated with +=) and d_values (strided like `values`, accumulated).
template <typename T>
void composite_strided_backward(int n, const T* sigma, const T* deltas, const T* ts,
                                const T* values, int value_stride, int value_offset, int channels,
                                const T* d_value, T d_accumulation, T d_depth, T* d_sigma,
                                T* d_values);

struct RenderOptions {
  int samples_per_ray = 128;
  bool normalize_depth = false;  // divide depth by accumulation
  int chunk_rays = 256;
};

struct RenderedImages {
  Image color;         // 3 channels, empty when the model does not render color
  Image modality;      // 1 channel, empty when the model does not render the modality
  Image depth;         // 1 channel
  Image accumulation;  // 1 channel
};

/// Per-ray results of a model evaluated with uniform sampling.
struct RayRender {
  std::array<double, 3> color{};
  double modality = 0.0;
  double depth = 0.0;
  double accumulation = 0.0;
};

template <typename T>
std::vector<RayRender> render_rays(const FieldModel<T>& model, std::span<const Ray> rays,
                                   const RenderOptions& options);

/// Renders every pixel of the camera. Deterministic (uniform midpoint sampling).
template <typename T>
RenderedImages render_image(const FieldModel<T>& model, const Camera& camera, const RenderOptions& options);

}  // namespace mmnerf
