// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "mmnerf/error.hpp"

namespace mmnerf {

void validate_camera(const Camera& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw DomainError("focal lengths must be positive");
  if (cam.width <= 0 || cam.height <= 0) throw DomainError("image size must be positive");
  if (!(cam.cx >= 0.0 && cam.cx < cam.width && cam.cy >= 0.0 && cam.cy < cam.height)) {
    throw DomainError("principal point outside the image");
  }
  const Eigen::Matrix3d r = cam.rotation();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho < 1e-6) || r.determinant() < 0.0) throw DomainError("pose rotation is not a proper rotation");
  if (!cam.pose.allFinite()) throw DomainError("pose is not finite");
}

std::optional<std::pair<double, double>> unit_cube_interval(const Vec3& origin, const Vec3& dir) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < 0.0 || origin[a] > 1.0) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[a];
    double ta = (0.0 - origin[a]) * inv;
    double tb = (1.0 - origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

Ray pixel_to_ray(const Camera& cam, int px, int py) {
  if (px < 0 || px >= cam.width || py < 0 || py >= cam.height) {
    throw DomainError("pixel (" + std::to_string(px) + ", " + std::to_string(py) + ") outside the image");
  }
  const Vec3 local((px + 0.5 - cam.cx) / cam.fx, -(py + 0.5 - cam.cy) / cam.fy, -1.0);
  Ray ray;
  ray.origin = cam.origin();
  ray.direction = (cam.rotation() * local).normalized();
  if (auto iv = unit_cube_interval(ray.origin, ray.direction)) {
    ray.t_near = iv->first;
    ray.t_far = iv->second;
  } else {
    ray.t_near = 0.0;
    ray.t_far = 0.0;
  }
  return ray;
}

std::vector<Ray> generate_rays(const Camera& cam, std::span<const Pixel> pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const Pixel& p : pixels) rays.push_back(pixel_to_ray(cam, p.x, p.y));
  return rays;
}

std::vector<Pixel> all_pixels(const Camera& cam) {
  std::vector<Pixel> px;
  px.reserve(static_cast<size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) px.push_back({x, y});
  return px;
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 back = (eye - target).normalized();  // camera +z
  Vec3 right = up.cross(back);
  if (right.norm() < 1e-9) right = Vec3(0, 1, 0).cross(back);
  right.normalize();
  const Vec3 cam_up = back.cross(right);
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 0) = right;
  m.block<3, 1>(0, 1) = cam_up;
  m.block<3, 1>(0, 2) = back;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

Camera transformed(const Camera& cam, const Mat4& rigid) {
  Camera out = cam;
  out.pose = rigid * cam.pose;
  return out;
}

}  // namespace mmnerf
