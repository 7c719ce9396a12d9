// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmnerf/geometry.hpp"
#include "mmnerf/image.hpp"

// Pixel coordinates in this module put pixel centers on integers: pixel (i, j)
// is the point x = i, y = j.

namespace mmnerf {

using Vec2 = Eigen::Vector2d;

/// RGB-frame point and its second-modality counterpart.
struct Correspondence {
  Vec2 src;
  Vec2 dst;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Maps RGB pixel coordinates to second-modality pixel coordinates.
struct Homography {
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();

  Vec2 apply(const Vec2& p) const;
  Homography inverse() const;
  /// Scales so H(2,2) = 1 when |H(2,2)| is not negligible.
  Homography normalized() const;
};

struct HomographyFit {
  Homography homography;
  double rms_error = 0.0;  // pixels, over the input correspondences
};

/// Threshold, 8-connected components, centroid of each component with at least
/// `min_blob_area` pixels. Returned in reading order. Throws DegenerateError when
/// nothing is found. With `invert`, blobs are the pixels at or below `threshold`
/// and are weighted by 1 - v.
std::vector<Vec2> detect_midpoints(const Image& image, double threshold, int min_blob_area,
                                   bool invert = false);

/// Sorts points into row bands (top to bottom), then by x within each band.
std::vector<Vec2> reading_order(std::span<const Vec2> points);

/// Dominant lattice orientation in radians, folded to [-pi/4, pi/4).
double grid_orientation(std::span<const Vec2> points);

/// Pairs two detections of the same hole grid: each set is rotated to its own
/// lattice orientation, put in reading order, and matched index by index.
/// Throws DimensionError when the counts differ.
CorrespondenceSet match_grids(std::span<const Vec2> rgb_points, std::span<const Vec2> modality_points);

/// Normalized DLT: Hartley-normalize both point sets, stack the 2N x 9 system,
/// take the right singular vector of the smallest singular value, denormalize,
/// scale to H(2,2) = 1. Throws DegenerateError for fewer than 4 pairs, duplicate
/// sources or a rank-deficient system.
HomographyFit estimate_homography(const CorrespondenceSet& pairs);

double rms_reprojection_error(const Homography& h, const CorrespondenceSet& pairs);

/// Entry-wise mean of h33-normalized homographies (multi-pair calibration).
Homography average_homographies(std::span<const Homography> hs);

struct WarpResult {
  Image image;  // same channel count as the input
  Image valid;  // 1 where the source sample was in bounds
};

/// Inverse warp: output(p) = bilinear sample of `image` at H p. Out-of-bounds
/// samples are 0 with valid = 0. Throws DegenerateError for singular H.
WarpResult warp_image(const Image& image, const Homography& h, int out_width, int out_height);

struct AlignedModality {
  std::vector<Image> images;
  std::vector<Image> valid;
  std::vector<Camera> cameras;  // the RGB cameras, reused for both modalities
};

/// Warps every modality image into its RGB frame with one per-scene homography.
AlignedModality align_dataset(std::span<const Image> rgb_images, std::span<const Image> modality_images,
                              const Homography& h, std::span<const Camera> rgb_cameras = {});

/// CSV with header-optional rows x,y,x',y'.
CorrespondenceSet read_correspondences_csv(const std::filesystem::path& path);

/// {"H": [[...],[...],[...]], "rms_error": e, "count": n}
std::string homography_json(const HomographyFit& fit, size_t count);
Homography read_homography_json(const std::filesystem::path& path);

}  // namespace mmnerf
