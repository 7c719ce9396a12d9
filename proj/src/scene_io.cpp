// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"

#include "mmnerf/error.hpp"

namespace mmnerf {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void check_finite(const Image& img, const std::string& what, size_t index) {
  for (float v : img.data) {
    if (!std::isfinite(v)) throw DomainError(what + " image " + std::to_string(index) + " has a non-finite pixel");
  }
}

Camera read_intrinsics(const json& j, Camera cam) {
  cam.fx = j.value("fx", cam.fx);
  cam.fy = j.value("fy", cam.fy);
  cam.cx = j.value("cx", cam.cx);
  cam.cy = j.value("cy", cam.cy);
  cam.width = j.value("width", cam.width);
  cam.height = j.value("height", cam.height);
  return cam;
}

json write_intrinsics(const Camera& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height}};
}

Mat4 read_pose(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("transform_matrix must be 4x4");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw FormatError("transform_matrix must be 4x4");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json write_pose(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

}  // namespace

void validate_dataset(const SceneDataset& ds) {
  const size_t n = ds.cameras.size();
  if (n == 0) throw DimensionError("scene has no views");
  if (ds.rgb_images.size() != n || ds.modality_images.size() != n) {
    throw DimensionError("scene has " + std::to_string(n) + " cameras, " + std::to_string(ds.rgb_images.size()) +
                         " RGB images and " + std::to_string(ds.modality_images.size()) + " modality images");
  }
  if (ds.has_masks() && ds.masks.size() != n) throw DimensionError("mask count does not match the view count");
  if (!(ds.modality_scale > 0.0) || !std::isfinite(ds.modality_scale)) {
    throw DomainError("modality_scale must be positive");
  }
  for (size_t i = 0; i < n; ++i) {
    const Camera& cam = ds.cameras[i];
    validate_camera(cam);
    const Image& rgb = ds.rgb_images[i];
    const Image& mod = ds.modality_images[i];
    if (rgb.channels != 3 || rgb.width != cam.width || rgb.height != cam.height) {
      throw DimensionError("RGB image " + std::to_string(i) + " does not match its camera");
    }
    if (mod.channels != 1 || mod.width != cam.width || mod.height != cam.height) {
      throw DimensionError("modality image " + std::to_string(i) + " does not match its camera");
    }
    check_finite(rgb, "RGB", i);
    check_finite(mod, "modality", i);
    for (float v : rgb.data)
      if (v < 0.0f || v > 1.0f) throw DomainError("RGB image " + std::to_string(i) + " has values outside [0,1]");
    for (float v : mod.data)
      if (v < 0.0f || v > 1.0f) {
        throw DomainError("modality image " + std::to_string(i) + " has values outside [0,1]");
      }
    if (ds.has_masks()) {
      const Image& m = ds.masks[i];
      if (m.channels != 1 || m.width != cam.width || m.height != cam.height) {
        throw DimensionError("mask " + std::to_string(i) + " does not match its camera");
      }
    }
  }
}

double scene_maximum(std::span<const Image> raw_images) {
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < raw_images.size(); ++i) {
    check_finite(raw_images[i], "modality", i);
    for (float v : raw_images[i].data) mx = std::max(mx, static_cast<double>(v));
  }
  if (raw_images.empty() || !std::isfinite(mx)) throw DimensionError("no modality pixels");
  return mx;
}

std::vector<Image> normalize_modality(std::span<const Image> raw_images, double scene_max) {
  if (!(scene_max > 0.0) || !std::isfinite(scene_max)) throw DomainError("scene maximum must be positive");
  std::vector<Image> out;
  out.reserve(raw_images.size());
  for (size_t i = 0; i < raw_images.size(); ++i) {
    Image img = raw_images[i];
    for (float& v : img.data) {
      if (!std::isfinite(v)) throw DomainError("modality image " + std::to_string(i) + " has a non-finite pixel");
      if (v > scene_max) throw DomainError("modality image " + std::to_string(i) + " exceeds the scene maximum");
      v = static_cast<float>(static_cast<double>(v) / scene_max);
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> denormalize_modality(std::span<const Image> images, double scene_max) {
  if (!(scene_max > 0.0)) throw DomainError("scene maximum must be positive");
  std::vector<Image> out(images.begin(), images.end());
  for (auto& img : out)
    for (float& v : img.data) v = static_cast<float>(static_cast<double>(v) * scene_max);
  return out;
}

SceneDataset load_scene(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path root = manifest_path.parent_path();
  SceneDataset ds;
  std::vector<Image> raw;
  try {
    ds.name = j.value("name", manifest_path.parent_path().filename().string());
    ds.modality = parse_modality(j.value("modality", std::string("thermal")));
    const Camera base = read_intrinsics(j.value("camera", json::object()), Camera{});

    // Optional scene bounds; world coordinates are mapped into the unit cube
    // with one uniform scale so poses stay rigid.
    Vec3 lo = Vec3::Zero();
    double scale = 1.0;
    if (j.contains("aabb")) {
      const auto& a = j.at("aabb");
      if (!a.is_array() || a.size() != 2) throw FormatError("aabb must be [[x0,y0,z0],[x1,y1,z1]]");
      Vec3 hi;
      for (int k = 0; k < 3; ++k) {
        lo[k] = a[0].at(k).get<double>();
        hi[k] = a[1].at(k).get<double>();
      }
      const double extent = (hi - lo).maxCoeff();
      if (!(extent > 0.0)) throw FormatError("aabb has no extent");
      scale = 1.0 / extent;
      lo -= 0.5 * (Vec3::Constant(extent) - (hi - lo));
    }

    const auto& frames = j.at("frames");
    if (!frames.is_array()) throw FormatError("frames must be an array");
    size_t n_mask = 0;
    for (size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      Camera cam = read_intrinsics(f.value("camera", json::object()), base);
      cam.pose = read_pose(f.at("transform_matrix"));
      cam.pose.block<3, 1>(0, 3) = (cam.pose.block<3, 1>(0, 3) - lo) * scale;
      ds.cameras.push_back(cam);
      if (f.contains("rgb")) {
        Image img = read_image(root / f.at("rgb").get<std::string>());
        if (img.channels == 1) {
          Image c3(img.width, img.height, 3);
          for (size_t p = 0; p < img.pixel_count(); ++p)
            for (int c = 0; c < 3; ++c) c3.data[p * 3 + c] = img.data[p];
          img = std::move(c3);
        }
        ds.rgb_images.push_back(std::move(img));
      }
      if (f.contains("modality")) {
        Image img = read_image(root / f.at("modality").get<std::string>());
        if (img.channels != 1) img = extract_channel(img, 0);
        raw.push_back(std::move(img));
      }
      if (f.contains("mask")) {
        ds.masks.push_back(read_mask_png(root / f.at("mask").get<std::string>()));
        ++n_mask;
      }
    }
    if (n_mask != 0 && n_mask != frames.size()) throw DimensionError("masks must be given for all frames or none");
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  if (raw.size() != ds.cameras.size() || ds.rgb_images.size() != ds.cameras.size()) {
    throw DimensionError("manifest lists " + std::to_string(ds.cameras.size()) + " frames but " +
                         std::to_string(ds.rgb_images.size()) + " RGB and " + std::to_string(raw.size()) +
                         " modality images");
  }
  for (size_t i = 0; i < raw.size(); ++i) {
    check_finite(ds.rgb_images[i], "RGB", i);
    check_finite(raw[i], "modality", i);
    if (!raw[i].same_shape(Image(ds.rgb_images[i].width, ds.rgb_images[i].height, 1))) {
      throw DimensionError("modality image " + std::to_string(i) + " differs in size from its RGB image");
    }
  }
  ds.modality_scale = scene_maximum(raw);
  if (j.contains("modality_scale")) {
    const double given = j.at("modality_scale").get<double>();
    if (std::abs(given - ds.modality_scale) > 1e-6 * std::abs(ds.modality_scale)) {
      throw DomainError("manifest modality_scale " + std::to_string(given) + " differs from the data maximum " +
                        std::to_string(ds.modality_scale));
    }
  }
  ds.modality_images = normalize_modality(raw, ds.modality_scale);
  validate_dataset(ds);
  return ds;
}

fs::path save_scene(const SceneDataset& ds, const fs::path& dir) {
  validate_dataset(ds);
  const std::string mod_dir = to_string(ds.modality);
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / mod_dir);
  if (ds.has_masks()) fs::create_directories(dir / "mask");
  const auto raw = denormalize_modality(ds.modality_images, ds.modality_scale);

  json frames = json::array();
  double stored_max = 0.0;
  for (size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%03zu", i);
    const std::string rgb = "rgb/" + std::string(name) + ".png";
    const std::string mod = mod_dir + "/" + name + ".pfm";
    write_png(dir / rgb, ds.rgb_images[i]);
    write_pfm(dir / mod, raw[i]);
    for (float v : raw[i].data) stored_max = std::max(stored_max, static_cast<double>(v));
    json f = {{"rgb", rgb}, {"modality", mod}, {"transform_matrix", write_pose(ds.cameras[i].pose)},
              {"camera", write_intrinsics(ds.cameras[i])}};
    if (ds.has_masks()) {
      const std::string mask = "mask/" + std::string(name) + ".png";
      write_png(dir / mask, ds.masks[i]);
      f["mask"] = mask;
    }
    frames.push_back(std::move(f));
  }
  json j = {{"name", ds.name},
            {"modality", to_string(ds.modality)},
            {"modality_scale", stored_max},
            {"camera", write_intrinsics(ds.cameras[0])},
            {"frames", std::move(frames)}};
  const fs::path manifest = dir / "manifest.json";
  atomic_write(manifest, j.dump(2) + "\n");
  return manifest;
}

SceneDataset select_views(const SceneDataset& ds, std::span<const size_t> indices) {
  SceneDataset out;
  out.name = ds.name;
  out.modality = ds.modality;
  out.modality_scale = ds.modality_scale;
  for (size_t i : indices) {
    if (i >= ds.size()) throw DomainError("view index " + std::to_string(i) + " out of range");
    out.cameras.push_back(ds.cameras[i]);
    out.rgb_images.push_back(ds.rgb_images[i]);
    out.modality_images.push_back(ds.modality_images[i]);
    if (ds.has_masks()) out.masks.push_back(ds.masks[i]);
  }
  return out;
}

}  // namespace mmnerf
