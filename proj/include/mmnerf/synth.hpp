// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mmnerf/geometry.hpp"
#include "mmnerf/image.hpp"
#include "mmnerf/scene_io.hpp"

namespace mmnerf {

/// Gaussian density blob. `modality` is in raw sensor units (e.g. degrees C).
struct Blob {
  Vec3 center = Vec3::Constant(0.5);
  double radius = 0.1;
  double amplitude = 50.0;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double modality = 30.0;
};

struct AnalyticScene {
  std::vector<Blob> blobs;
  /// Raw modality value seen where rays leave the volume unoccluded.
  double background_modality = 0.0;
};

struct AnalyticSample {
  double sigma = 0.0;
  std::array<double, 3> color{};
  double modality = 0.0;
};

/// sigma = sum a_k exp(-|x - c_k|^2 / r_k^2); color and modality are the
/// density-weighted blends of the blob values (zero where sigma = 0).
AnalyticSample analytic_field(const AnalyticScene& scene, const Vec3& x);

struct OracleRay {
  std::array<double, 3> color{};
  double modality = 0.0;  // includes the background term
  double depth = 0.0;
  double accumulation = 0.0;
  double transmittance = 1.0;
};

/// Running-product alpha compositing of explicit samples; coded separately
/// from the renderer so the two can check each other. `values` holds
/// `channels` entries per sample.
struct OracleComposite {
  std::vector<double> value;
  double depth = 0.0;
  double accumulation = 0.0;
  double transmittance = 1.0;
};
OracleComposite oracle_composite(std::span<const double> sigma, std::span<const double> ts,
                                 std::span<const double> deltas, std::span<const double> values,
                                 int channels);

/// Dense uniform quadrature along the unit-cube interval of one ray.
OracleRay oracle_ray(const AnalyticScene& scene, const Ray& ray, int quadrature_n);

struct OracleImages {
  Image rgb;           // 3 channels, composited on black
  Image modality;      // raw units, background term included
  Image depth;
  Image accumulation;
};

OracleImages oracle_render(const AnalyticScene& scene, const Camera& camera, int quadrature_n = 1024);

enum class Layout { kForwardFacing, kOrbit360 };

struct SynthOptions {
  Layout layout = Layout::kForwardFacing;
  int n_views = 30;
  int width = 64;
  int height = 64;
  double focal = 0.0;  // pixels; 0 picks 1.1 * width
  Modality modality = Modality::kThermal;
  uint64_t seed = 0;
  double noise_sigma = 0.0;  // Gaussian pixel noise on RGB and normalized modality
  bool masks = true;
  double mask_threshold = 0.5;  // accumulation above which a pixel is object
  int quadrature_n = 1024;
  double arc_degrees = 60.0;      // forward-facing span
  double elevation_degrees = 20.0;
  double radius = 1.5;            // camera distance to the cube center
};

/// Cameras on a forward arc or a full orbit, all looking at the cube center.
std::vector<Camera> make_cameras(const SynthOptions& options);

/// The built-in test object: a handful of colored blobs with distinct
/// temperatures, on a uniform warm background.
AnalyticScene default_scene();

/// Renders every view with the oracle and packages a dataset. For the depth
/// modality the raw image is the expected ray distance, where the transmitted
/// remainder counts at the cube exit distance.
SceneDataset make_dataset(const AnalyticScene& scene, const SynthOptions& options);

}  // namespace mmnerf
