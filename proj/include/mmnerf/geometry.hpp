// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mmnerf {

using Vec3 = Eigen::Vector3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole camera. Camera frame: x right, y up, looking down -z. Image rows
/// grow downward, so pixel y maps to camera -y.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Mat4 pose = Mat4::Identity();  // camera-to-world, rigid

  Vec3 origin() const { return pose.block<3, 1>(0, 3); }
  Eigen::Matrix3d rotation() const { return pose.block<3, 3>(0, 0); }
};

/// Throws DomainError when intrinsics or the pose rotation are invalid.
void validate_camera(const Camera& cam);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3(0, 0, -1);
  double t_near = 0.0;
  double t_far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
  /// False for rays that miss the scene volume; those composite to background.
  bool hits() const { return t_far > t_near; }
};

struct Pixel {
  int x = 0;
  int y = 0;
};

/// Ray through the center (px + 0.5, py + 0.5) of a pixel. [t_near, t_far] is
/// the ray's intersection with the unit cube; a ray missing the cube gets the
/// empty interval [0, 0].
Ray pixel_to_ray(const Camera& cam, int px, int py);

std::vector<Ray> generate_rays(const Camera& cam, std::span<const Pixel> pixels);

/// All pixels of the image in row-major order.
std::vector<Pixel> all_pixels(const Camera& cam);

/// Parametric interval [t0, t1] (t0 >= 0) where the ray lies inside [0,1]^3,
/// or nullopt when it misses the cube.
std::optional<std::pair<double, double>> unit_cube_interval(const Vec3& origin, const Vec3& dir);

/// Builds a camera-to-world pose at `eye` looking at `target` with the given up hint.
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, 0, 1));

/// Applies a rigid transform (left-multiplication) to the camera pose.
Camera transformed(const Camera& cam, const Mat4& rigid);

}  // namespace mmnerf
