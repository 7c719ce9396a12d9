// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include "json.hpp"

#include "mmnerf/error.hpp"
#include "mmnerf/parallel.hpp"

namespace mmnerf {

Vec2 Homography::apply(const Vec2& p) const {
  const Eigen::Vector3d q = H * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return {q.x() / q.z(), q.y() / q.z()};
}

Homography Homography::inverse() const {
  if (std::abs(H.determinant()) <= 1e-12 * std::pow(H.norm(), 3)) throw DegenerateError("homography is singular");
  return Homography{H.inverse()}.normalized();
}

Homography Homography::normalized() const {
  const double s = H(2, 2);
  if (std::abs(s) <= 1e-12 * H.norm()) return *this;
  return Homography{H / s};
}

std::vector<Vec2> detect_midpoints(const Image& image, double threshold, int min_blob_area, bool invert) {
  if (image.channels != 1) throw DimensionError("midpoint detection needs a single-channel image");
  const int W = image.width, Hh = image.height;
  auto strength = [&](int x, int y) {
    const double v = image.at(x, y);
    return invert ? 1.0 - v : v;
  };
  const double thr = invert ? 1.0 - threshold : threshold;
  std::vector<int> label(static_cast<size_t>(W) * Hh, -1);
  std::vector<Vec2> centers;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < Hh; ++y) {
    for (int x = 0; x < W; ++x) {
      const size_t idx = static_cast<size_t>(y) * W + x;
      if (label[idx] >= 0 || strength(x, y) < thr) continue;
      // Flood fill one 8-connected component.
      double sw = 0.0, sx = 0.0, sy = 0.0;
      int area = 0;
      label[idx] = 1;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        const double w = strength(cx, cy);
        sw += w;
        sx += w * cx;
        sy += w * cy;
        ++area;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= W || ny >= Hh) continue;
            const size_t n = static_cast<size_t>(ny) * W + nx;
            if (label[n] >= 0 || strength(nx, ny) < thr) continue;
            label[n] = 1;
            stack.push_back({nx, ny});
          }
        }
      }
      if (area >= min_blob_area && sw > 0.0) centers.emplace_back(sx / sw, sy / sw);
    }
  }
  if (centers.empty()) throw DegenerateError("no calibration blobs found");
  return reading_order(centers);
}

namespace {

double nearest_distance(std::span<const Vec2> pts, size_t i, Vec2* delta = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < pts.size(); ++j) {
    if (j == i) continue;
    const Vec2 d = pts[j] - pts[i];
    const double n = d.norm();
    if (n < best) {
      best = n;
      if (delta) *delta = d;
    }
  }
  return best;
}

}  // namespace

std::vector<Vec2> reading_order(std::span<const Vec2> points) {
  std::vector<Vec2> pts(points.begin(), points.end());
  if (pts.size() < 2) return pts;
  std::vector<double> nn;
  for (size_t i = 0; i < pts.size(); ++i) nn.push_back(nearest_distance(pts, i));
  std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
  const double band = 0.5 * nn[nn.size() / 2];

  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.y() < b.y(); });
  std::vector<Vec2> out;
  size_t start = 0;
  while (start < pts.size()) {
    size_t end = start + 1;
    while (end < pts.size() && pts[end].y() - pts[start].y() <= band) ++end;
    std::sort(pts.begin() + start, pts.begin() + end, [](const Vec2& a, const Vec2& b) { return a.x() < b.x(); });
    out.insert(out.end(), pts.begin() + start, pts.begin() + end);
    start = end;
  }
  return out;
}

double grid_orientation(std::span<const Vec2> points) {
  if (points.size() < 2) return 0.0;
  double s = 0.0, c = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    Vec2 d = Vec2::Zero();
    nearest_distance(points, i, &d);
    const double a = 4.0 * std::atan2(d.y(), d.x());
    s += std::sin(a);
    c += std::cos(a);
  }
  double theta = std::atan2(s, c) / 4.0;
  constexpr double q = std::numbers::pi / 4.0;
  if (theta >= q) theta -= 2.0 * q;
  return theta;
}

CorrespondenceSet match_grids(std::span<const Vec2> rgb_points, std::span<const Vec2> modality_points) {
  if (rgb_points.size() != modality_points.size()) {
    throw DimensionError("calibration grids differ in size: " + std::to_string(rgb_points.size()) + " vs " +
                         std::to_string(modality_points.size()));
  }
  auto order = [](std::span<const Vec2> pts) {
    const double th = grid_orientation(pts);
    const Eigen::Rotation2Dd rot(-th);
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    std::vector<Vec2> rotated;
    for (const auto& p : pts) rotated.push_back(rot * (p - mean));
    // Tag each rotated point with its index through a parallel lookup.
    const auto sorted = reading_order(rotated);
    std::vector<size_t> idx;
    for (const auto& s : sorted) {
      for (size_t i = 0; i < rotated.size(); ++i) {
        if (rotated[i] == s && std::find(idx.begin(), idx.end(), i) == idx.end()) {
          idx.push_back(i);
          break;
        }
      }
    }
    return idx;
  };
  const auto a = order(rgb_points);
  const auto b = order(modality_points);
  CorrespondenceSet out;
  for (size_t k = 0; k < a.size(); ++k) out.push_back({rgb_points[a[k]], modality_points[b[k]]});
  return out;
}

namespace {

Eigen::Matrix3d hartley(const std::vector<Vec2>& pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  if (!(dist > 0.0)) throw DegenerateError("correspondence points coincide");
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d T;
  T << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return T;
}

}  // namespace

HomographyFit estimate_homography(const CorrespondenceSet& pairs) {
  const size_t n = pairs.size();
  if (n < 4) throw DegenerateError("a homography needs at least 4 correspondences, got " + std::to_string(n));
  for (size_t i = 0; i < n; ++i) {
    if (!pairs[i].src.allFinite() || !pairs[i].dst.allFinite()) throw DomainError("non-finite correspondence");
    for (size_t j = i + 1; j < n; ++j)
      if (pairs[i].src == pairs[j].src) throw DegenerateError("duplicate source point in correspondences");
  }
  std::vector<Vec2> src, dst;
  for (const auto& p : pairs) {
    src.push_back(p.src);
    dst.push_back(p.dst);
  }
  const Eigen::Matrix3d Ts = hartley(src), Td = hartley(dst);
  Eigen::MatrixXd A(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d s = Ts * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
    const Eigen::Vector3d d = Td * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1.0);
    const double x = s.x() / s.z(), y = s.y() / s.z(), u = d.x() / d.z(), v = d.y() / d.z();
    A.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    A.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 8 || sv(7) <= 1e-10 * sv(0)) throw DegenerateError("correspondences are degenerate (rank deficient)");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  HomographyFit fit;
  fit.homography = Homography{Td.inverse() * Hn * Ts}.normalized();
  if (!fit.homography.H.allFinite() ||
      std::abs(fit.homography.H.determinant()) <= 1e-12 * std::pow(fit.homography.H.norm(), 3)) {
    throw DegenerateError("estimated homography is singular");
  }
  fit.rms_error = rms_reprojection_error(fit.homography, pairs);
  return fit;
}

double rms_reprojection_error(const Homography& h, const CorrespondenceSet& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) sum += (h.apply(p.src) - p.dst).squaredNorm();
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

Homography average_homographies(std::span<const Homography> hs) {
  if (hs.empty()) throw DegenerateError("no homographies to average");
  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  for (const auto& h : hs) sum += h.normalized().H;
  return Homography{sum / static_cast<double>(hs.size())}.normalized();
}

WarpResult warp_image(const Image& image, const Homography& h, int out_width, int out_height) {
  if (out_width < 1 || out_height < 1) throw DimensionError("warp output must be non-empty");
  if (!h.H.allFinite() || std::abs(h.H.determinant()) <= 1e-12 * std::pow(h.H.norm(), 3)) {
    throw DegenerateError("cannot warp with a singular homography");
  }
  const int C = image.channels, W = image.width, Hh = image.height;
  WarpResult out{Image(out_width, out_height, C), Image(out_width, out_height, 1)};
  constexpr double kEdge = 1e-9;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      const Eigen::Vector3d q = h.H * Eigen::Vector3d(x, y, 1.0);
      if (!(std::abs(q.z()) > 0.0)) continue;
      const double sx = q.x() / q.z(), sy = q.y() / q.z();
      if (!(sx >= -kEdge && sy >= -kEdge && sx <= W - 1 + kEdge && sy <= Hh - 1 + kEdge)) continue;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, W - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, Hh - 1);
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, Hh - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0), fy = std::clamp(sy - y0, 0.0, 1.0);
      for (int c = 0; c < C; ++c) {
        const double top = (1 - fx) * image.at(x0, y0, c) + fx * image.at(x1, y0, c);
        const double bot = (1 - fx) * image.at(x0, y1, c) + fx * image.at(x1, y1, c);
        out.image.at(x, y, c) = static_cast<float>((1 - fy) * top + fy * bot);
      }
      out.valid.at(x, y) = 1.0f;
    }
  }
  return out;
}

AlignedModality align_dataset(std::span<const Image> rgb_images, std::span<const Image> modality_images,
                              const Homography& h, std::span<const Camera> rgb_cameras) {
  if (rgb_images.size() != modality_images.size()) {
    throw DimensionError("alignment needs one modality image per RGB image");
  }
  if (!rgb_cameras.empty() && rgb_cameras.size() != rgb_images.size()) {
    throw DimensionError("alignment needs one camera per RGB image");
  }
  AlignedModality out;
  out.images.resize(rgb_images.size());
  out.valid.resize(rgb_images.size());
  parallel_for(rgb_images.size(), [&](size_t i) {
    auto w = warp_image(modality_images[i], h, rgb_images[i].width, rgb_images[i].height);
    out.images[i] = std::move(w.image);
    out.valid[i] = std::move(w.valid);
  });
  out.cameras.assign(rgb_cameras.begin(), rgb_cameras.end());
  return out;
}

CorrespondenceSet read_correspondences_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  CorrespondenceSet out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double v[4];
    if (!(row >> v[0] >> v[1] >> v[2] >> v[3])) {
      if (out.empty() && lineno == 1) continue;  // header
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected x,y,x',y'");
    }
    out.push_back({Vec2(v[0], v[1]), Vec2(v[2], v[3])});
  }
  return out;
}

std::string homography_json(const HomographyFit& fit, size_t count) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({fit.homography.H(r, 0), fit.homography.H(r, 1), fit.homography.H(r, 2)});
  nlohmann::json j = {{"H", rows}, {"rms_error", fit.rms_error}, {"count", count}};
  return j.dump(2) + "\n";
}

Homography read_homography_json(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    const auto& rows = j.at("H");
    Homography h;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h.H(r, c) = rows.at(r).at(c).get<double>();
    if (!h.H.allFinite()) throw FormatError("homography has non-finite entries");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid homography file " + path.string() + ": " + e.what());
  }
}

}  // namespace mmnerf
