// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmnerf/geometry.hpp"
#include "mmnerf/image.hpp"
#include "mmnerf/types.hpp"

namespace mmnerf {

/// Posed, aligned RGB + second-modality image set. Modality images are stored
/// normalized by the scene maximum; `modality_scale` restores raw sensor units.
struct SceneDataset {
  std::string name;
  std::vector<Camera> cameras;
  std::vector<Image> rgb_images;       // H x W x 3, [0,1]
  std::vector<Image> modality_images;  // H x W x 1, [0,1]
  std::vector<Image> masks;            // H x W x 1, {0,1}; empty when absent
  Modality modality = Modality::kThermal;
  double modality_scale = 1.0;

  size_t size() const { return cameras.size(); }
  bool has_masks() const { return !masks.empty(); }
};

/// Throws DimensionError / DomainError / FormatError on any invariant violation.
void validate_dataset(const SceneDataset& ds);

/// Largest value over every pixel of every image.
double scene_maximum(std::span<const Image> raw_images);

/// raw / scene_max per pixel. Throws DomainError when scene_max <= 0 or a pixel
/// exceeds it.
std::vector<Image> normalize_modality(std::span<const Image> raw_images, double scene_max);
std::vector<Image> denormalize_modality(std::span<const Image> images, double scene_max);

/// Loads a scene manifest (JSON). Paths inside are relative to the manifest.
///
/// {
///   "name": "lion", "modality": "thermal", "modality_scale": 41.2,
///   "camera": {"fx":..,"fy":..,"cx":..,"cy":..,"width":..,"height":..},
///   "aabb": [[x0,y0,z0],[x1,y1,z1]],        // optional, mapped to [0,1]^3
///   "frames": [{"rgb": "rgb/000.png", "modality": "thermal/000.pfm",
///               "mask": "mask/000.png", "transform_matrix": [[4x4]],
///               "camera": {...}}]               // per-frame intrinsics optional
/// }
///
/// modality_scale is recomputed from the data; a manifest value that disagrees
/// by more than 1e-6 (relative) is rejected.
SceneDataset load_scene(const std::filesystem::path& manifest_path);

/// Writes manifest.json, rgb/*.png, <modality>/*.pfm (raw units) and mask/*.png.
/// Returns the manifest path.
std::filesystem::path save_scene(const SceneDataset& ds, const std::filesystem::path& dir);

/// Subset of views, in the given order.
SceneDataset select_views(const SceneDataset& ds, std::span<const size_t> indices);

}  // namespace mmnerf
