// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/renderer.hpp"

#include <cmath>

#include "mmnerf/error.hpp"
#include "mmnerf/parallel.hpp"

namespace mmnerf {

template <typename T>
void sample_interval(T t_near, T t_far, int n, SamplingMode mode, Rng* rng, T* ts, T* deltas) {
  const T step = (t_far - t_near) / static_cast<T>(n);
  for (int i = 0; i < n; ++i) {
    const T u = mode == SamplingMode::kUniform ? T(0.5) : static_cast<T>(rng->uniform());
    ts[i] = t_near + (static_cast<T>(i) + u) * step;
  }
  for (int i = 0; i + 1 < n; ++i) deltas[i] = ts[i + 1] - ts[i];
  deltas[n - 1] = t_far - ts[n - 1];
}

RaySampleSet sample_ray(const Ray& ray, int n, SamplingMode mode, Rng* rng) {
  if (n < 1) throw DomainError("sample count must be positive");
  if (!(ray.t_near >= 0.0 && ray.t_near < ray.t_far)) throw DomainError("degenerate ray interval");
  if (mode == SamplingMode::kStratified && rng == nullptr) throw DomainError("stratified sampling needs an rng");
  RaySampleSet s;
  s.ts.resize(n);
  s.deltas.resize(n);
  sample_interval(ray.t_near, ray.t_far, n, mode, rng, s.ts.data(), s.deltas.data());
  s.positions.reserve(n);
  for (double t : s.ts) s.positions.push_back(ray.at(t));
  return s;
}

template <typename T>
CompositeOut<T> composite_strided(int n, const T* sigma, const T* deltas, const T* ts, const T* values,
                                  int value_stride, int value_offset, int channels, T* weights_out) {
  CompositeOut<T> out;
  T optical_depth = 0;
  for (int i = 0; i < n; ++i) {
    const T tau = sigma[i] * deltas[i];
    const T trans = std::exp(-optical_depth);
    const T w = trans * -std::expm1(-tau);
    const T* v = values + static_cast<size_t>(i) * value_stride + value_offset;
    for (int c = 0; c < channels; ++c) out.value[c] += w * v[c];
    out.depth += w * ts[i];
    out.accumulation += w;
    optical_depth += tau;
    if (weights_out) weights_out[i] = w;
  }
  out.transmittance = std::exp(-optical_depth);
  return out;
}

template <typename T>
void composite_strided_backward(int n, const T* sigma, const T* deltas, const T* ts, const T* values,
                                int value_stride, int value_offset, int channels, const T* d_value,
                                T d_accumulation, T d_depth, T* d_sigma, T* d_values) {
  // dL/dsigma_i = delta_i * (T_{i+1} g_i - sum_{j>i} w_j g_j),
  // g_j = <d_value, v_j> + d_accumulation + d_depth * t_j.
  T optical_depth = 0;
  for (int i = 0; i < n; ++i) optical_depth += sigma[i] * deltas[i];
  T suffix = 0;
  for (int i = n - 1; i >= 0; --i) {
    const T tau = sigma[i] * deltas[i];
    const T after = optical_depth;  // sum_{j<=i} tau_j
    optical_depth -= tau;
    const T trans_next = std::exp(-after);
    const T w = std::exp(-optical_depth) * -std::expm1(-tau);
    const T* v = values + static_cast<size_t>(i) * value_stride + value_offset;
    T* dv = d_values + static_cast<size_t>(i) * value_stride + value_offset;
    T g = d_accumulation + d_depth * ts[i];
    for (int c = 0; c < channels; ++c) {
      g += d_value[c] * v[c];
      dv[c] += w * d_value[c];
    }
    d_sigma[i] += deltas[i] * (trans_next * g - suffix);
    suffix += w * g;
  }
}

RenderResult composite(const RaySampleSet& samples, std::span<const FieldOutput> outputs, Channel channel) {
  const int n = static_cast<int>(samples.size());
  if (outputs.size() != samples.size() || samples.deltas.size() != samples.ts.size()) {
    throw DimensionError("sample and field-output counts differ");
  }
  const int channels = channel == Channel::kColor ? 3 : 1;
  std::vector<double> sigma(n), values(static_cast<size_t>(n) * channels);
  for (int i = 0; i < n; ++i) {
    const FieldOutput& o = outputs[i];
    if (!(o.sigma >= 0.0)) throw DomainError("negative density at sample " + std::to_string(i));
    sigma[i] = o.sigma;
    if (channel == Channel::kColor) {
      for (int c = 0; c < 3; ++c) values[i * 3 + c] = o.color[c];
    } else {
      if (!o.modality) throw DomainError("field output has no modality value");
      values[i] = *o.modality;
    }
  }
  RenderResult r;
  r.weights.resize(n);
  const auto out = composite_strided<double>(n, sigma.data(), samples.deltas.data(), samples.ts.data(),
                                             values.data(), channels, 0, channels, r.weights.data());
  r.value.assign(out.value, out.value + channels);
  r.depth = out.depth;
  r.accumulation = out.accumulation;
  r.transmittance = out.transmittance;
  r.transmittances.resize(n);
  double od = 0.0;
  for (int i = 0; i < n; ++i) {
    r.transmittances[i] = std::exp(-od);
    od += sigma[i] * samples.deltas[i];
  }
  return r;
}

template <typename T>
std::vector<RayRender> render_rays(const FieldModel<T>& model, std::span<const Ray> rays,
                                   const RenderOptions& options) {
  if (options.samples_per_ray < 1) throw DomainError("sample count must be positive");
  const int n = options.samples_per_ray;
  const size_t chunk = static_cast<size_t>(std::max(1, options.chunk_rays));
  const size_t chunks = (rays.size() + chunk - 1) / chunk;
  std::vector<RayRender> out(rays.size());
  const int V = model.value_channels();
  const int mod_ch = model.modality_channel();

  parallel_for(chunks, [&](size_t ci) {
    const size_t begin = ci * chunk;
    const size_t end = std::min(rays.size(), begin + chunk);
    std::vector<size_t> hit;
    for (size_t r = begin; r < end; ++r)
      if (rays[r].hits()) hit.push_back(r);
    if (hit.empty()) return;

    const int M = static_cast<int>(hit.size()) * n;
    FieldBatch<T> b;
    b.positions.resize(3, M);
    b.dir_features.resize(model.config.encoding.direction_dim(), M);
    std::vector<T> ts(M), deltas(M);
    for (size_t h = 0; h < hit.size(); ++h) {
      const Ray& ray = rays[hit[h]];
      T* t = ts.data() + h * n;
      sample_interval<T>(static_cast<T>(ray.t_near), static_cast<T>(ray.t_far), n, SamplingMode::kUniform, nullptr,
                         t, deltas.data() + h * n);
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

    for (size_t h = 0; h < hit.size(); ++h) {
      const size_t off = h * n;
      const T* vals = b.values.data() + off * V;
      RayRender& rr = out[hit[h]];
      const auto color = composite_strided<T>(n, b.sigma.data() + off, deltas.data() + off, ts.data() + off, vals,
                                              V, 0, 3);
      const auto mod = composite_strided<T>(n, b.sigma.data() + off, deltas.data() + off, ts.data() + off, vals,
                                            V, mod_ch, 1);
      for (int c = 0; c < 3; ++c) rr.color[c] = static_cast<double>(color.value[c]);
      rr.modality = static_cast<double>(mod.value[0]);
      rr.accumulation = static_cast<double>(color.accumulation);
      rr.depth = static_cast<double>(color.depth);
      if (options.normalize_depth && rr.accumulation > 0.0) rr.depth /= rr.accumulation;
    }
  });
  return out;
}

template <typename T>
RenderedImages render_image(const FieldModel<T>& model, const Camera& camera, const RenderOptions& options) {
  validate_camera(camera);
  const auto pixels = all_pixels(camera);
  const auto rays = generate_rays(camera, pixels);
  const auto rr = render_rays(model, std::span<const Ray>(rays), options);
  const int w = camera.width, h = camera.height;
  RenderedImages img;
  if (model.renders_color()) img.color = Image(w, h, 3);
  if (model.renders_modality()) img.modality = Image(w, h, 1);
  img.depth = Image(w, h, 1);
  img.accumulation = Image(w, h, 1);
  for (size_t p = 0; p < rr.size(); ++p) {
    const int x = pixels[p].x, y = pixels[p].y;
    if (!img.color.empty())
      for (int c = 0; c < 3; ++c) img.color.at(x, y, c) = static_cast<float>(rr[p].color[c]);
    if (!img.modality.empty()) img.modality.at(x, y) = static_cast<float>(rr[p].modality);
    img.depth.at(x, y) = static_cast<float>(rr[p].depth);
    img.accumulation.at(x, y) = static_cast<float>(rr[p].accumulation);
  }
  return img;
}

#define MMNERF_INSTANTIATE(T)                                                                                    \
  template void sample_interval<T>(T, T, int, SamplingMode, Rng*, T*, T*);                                     \
  template CompositeOut<T> composite_strided<T>(int, const T*, const T*, const T*, const T*, int, int, int, T*); \
  template void composite_strided_backward<T>(int, const T*, const T*, const T*, const T*, int, int, int,        \
                                              const T*, T, T, T*, T*);                                           \
  template std::vector<RayRender> render_rays<T>(const FieldModel<T>&, std::span<const Ray>,                     \
                                                 const RenderOptions&);                                          \
  template RenderedImages render_image<T>(const FieldModel<T>&, const Camera&, const RenderOptions&);

MMNERF_INSTANTIATE(float)
MMNERF_INSTANTIATE(double)
#undef MMNERF_INSTANTIATE

}  // namespace mmnerf
