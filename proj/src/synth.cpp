// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/synth.hpp"

#include <cmath>
#include <numbers>

#include "mmnerf/error.hpp"
#include "mmnerf/parallel.hpp"
#include "mmnerf/random.hpp"

namespace mmnerf {

AnalyticSample analytic_field(const AnalyticScene& scene, const Vec3& x) {
  AnalyticSample s;
  for (const auto& b : scene.blobs) {
    const double w = b.amplitude * std::exp(-(x - b.center).squaredNorm() / (b.radius * b.radius));
    s.sigma += w;
    for (int c = 0; c < 3; ++c) s.color[c] += w * b.color[c];
    s.modality += w * b.modality;
  }
  if (s.sigma > 0.0) {
    for (double& c : s.color) c /= s.sigma;
    s.modality /= s.sigma;
  } else {
    s.color = {0.0, 0.0, 0.0};
    s.modality = 0.0;
  }
  return s;
}

OracleComposite oracle_composite(std::span<const double> sigma, std::span<const double> ts,
                                 std::span<const double> deltas, std::span<const double> values, int channels) {
  const size_t n = sigma.size();
  if (ts.size() != n || deltas.size() != n || values.size() != n * static_cast<size_t>(channels)) {
    throw DimensionError("oracle inputs differ in length");
  }
  OracleComposite out;
  out.value.assign(channels, 0.0);
  double trans = 1.0;
  for (size_t i = 0; i < n; ++i) {
    const double alpha = 1.0 - std::exp(-sigma[i] * deltas[i]);
    const double w = trans * alpha;
    for (int c = 0; c < channels; ++c) out.value[c] += w * values[i * channels + c];
    out.depth += w * ts[i];
    out.accumulation += w;
    trans *= 1.0 - alpha;
  }
  out.transmittance = trans;
  return out;
}

OracleRay oracle_ray(const AnalyticScene& scene, const Ray& ray, int quadrature_n) {
  if (quadrature_n < 1) throw DomainError("quadrature needs at least one sample");
  OracleRay out;
  out.modality = scene.background_modality;
  if (!ray.hits()) return out;
  const double step = (ray.t_far - ray.t_near) / quadrature_n;
  std::vector<double> sigma(quadrature_n), ts(quadrature_n), deltas(quadrature_n), values(4 * quadrature_n);
  for (int i = 0; i < quadrature_n; ++i) {
    ts[i] = ray.t_near + (i + 0.5) * step;
    deltas[i] = i + 1 < quadrature_n ? step : ray.t_far - ts[i];
    const AnalyticSample s = analytic_field(scene, ray.at(ts[i]));
    sigma[i] = s.sigma;
    for (int c = 0; c < 3; ++c) values[4 * i + c] = s.color[c];
    values[4 * i + 3] = s.modality;
  }
  const OracleComposite comp = oracle_composite(sigma, ts, deltas, values, 4);
  for (int c = 0; c < 3; ++c) out.color[c] = comp.value[c];
  out.modality = comp.value[3] + comp.transmittance * scene.background_modality;
  out.depth = comp.depth;
  out.accumulation = comp.accumulation;
  out.transmittance = comp.transmittance;
  return out;
}

OracleImages oracle_render(const AnalyticScene& scene, const Camera& camera, int quadrature_n) {
  validate_camera(camera);
  const int W = camera.width, H = camera.height;
  OracleImages img{Image(W, H, 3), Image(W, H, 1), Image(W, H, 1), Image(W, H, 1)};
  parallel_for(static_cast<size_t>(H), [&](size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < W; ++x) {
      const OracleRay r = oracle_ray(scene, pixel_to_ray(camera, x, y), quadrature_n);
      for (int c = 0; c < 3; ++c) img.rgb.at(x, y, c) = static_cast<float>(r.color[c]);
      img.modality.at(x, y) = static_cast<float>(r.modality);
      img.depth.at(x, y) = static_cast<float>(r.depth);
      img.accumulation.at(x, y) = static_cast<float>(r.accumulation);
    }
  });
  return img;
}

std::vector<Camera> make_cameras(const SynthOptions& o) {
  if (o.n_views < 2) throw DomainError("a synthetic scene needs at least 2 views");
  if (o.width < 1 || o.height < 1) throw DomainError("image size must be positive");
  const double deg = std::numbers::pi / 180.0;
  const Vec3 center = Vec3::Constant(0.5);
  const double focal = o.focal > 0.0 ? o.focal : 1.1 * o.width;
  const double el = o.elevation_degrees * deg;
  std::vector<Camera> cams;
  for (int k = 0; k < o.n_views; ++k) {
    const double az = o.layout == Layout::kOrbit360
                          ? 2.0 * std::numbers::pi * k / o.n_views
                          : (-0.5 * o.arc_degrees + o.arc_degrees * k / (o.n_views - 1)) * deg - 0.5 * std::numbers::pi;
    const Vec3 eye = center + o.radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.width = o.width;
    cam.height = o.height;
    cam.cx = 0.5 * o.width;
    cam.cy = 0.5 * o.height;
    cam.pose = look_at(eye, center);
    cams.push_back(cam);
  }
  return cams;
}

AnalyticScene default_scene() {
  AnalyticScene s;
  s.background_modality = 24.0;
  s.blobs = {
      {Vec3(0.50, 0.50, 0.42), 0.16, 60.0, {0.85, 0.30, 0.20}, 36.0},
      {Vec3(0.32, 0.56, 0.56), 0.10, 70.0, {0.20, 0.70, 0.30}, 31.0},
      {Vec3(0.66, 0.40, 0.60), 0.11, 70.0, {0.25, 0.35, 0.90}, 33.0},
      {Vec3(0.55, 0.66, 0.30), 0.09, 80.0, {0.95, 0.85, 0.25}, 40.0},
      {Vec3(0.40, 0.34, 0.66), 0.08, 80.0, {0.90, 0.90, 0.90}, 29.0},
  };
  return s;
}

SceneDataset make_dataset(const AnalyticScene& scene, const SynthOptions& o) {
  if (o.quadrature_n < 1) throw DomainError("quadrature needs at least one sample");
  if (!(o.noise_sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  SceneDataset ds;
  ds.name = o.layout == Layout::kOrbit360 ? "synthetic-360" : "synthetic-ff";
  ds.modality = o.modality;
  ds.cameras = make_cameras(o);
  const size_t n = ds.cameras.size();
  std::vector<OracleImages> renders(n);
  for (size_t v = 0; v < n; ++v) renders[v] = oracle_render(scene, ds.cameras[v], o.quadrature_n);

  std::vector<Image> raw;
  for (size_t v = 0; v < n; ++v) {
    if (o.modality == Modality::kDepth) {
      // Expected distance, with rays that pass through counted at their exit distance.
      Image d = renders[v].depth;
      for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
          const Ray r = pixel_to_ray(ds.cameras[v], x, y);
          d.at(x, y) += (1.0f - renders[v].accumulation.at(x, y)) * static_cast<float>(r.t_far);
        }
      }
      raw.push_back(std::move(d));
    } else {
      raw.push_back(renders[v].modality);
    }
  }
  ds.modality_scale = scene_maximum(raw);
  ds.modality_images = normalize_modality(raw, ds.modality_scale);
  for (size_t v = 0; v < n; ++v) {
    Image rgb = renders[v].rgb;
    for (float& p : rgb.data) p = std::clamp(p, 0.0f, 1.0f);
    if (o.noise_sigma > 0.0) {
      Rng rng(mix_seed(o.seed, v));
      for (float& p : rgb.data) p = std::clamp(p + static_cast<float>(o.noise_sigma * rng.normal()), 0.0f, 1.0f);
      for (float& p : ds.modality_images[v].data) {
        p = std::clamp(p + static_cast<float>(o.noise_sigma * rng.normal()), 0.0f, 1.0f);
      }
    }
    ds.rgb_images.push_back(std::move(rgb));
    if (o.masks) {
      Image m(o.width, o.height, 1);
      for (size_t p = 0; p < m.data.size(); ++p) {
        m.data[p] = renders[v].accumulation.data[p] > o.mask_threshold ? 1.0f : 0.0f;
      }
      ds.masks.push_back(std::move(m));
    }
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace mmnerf
