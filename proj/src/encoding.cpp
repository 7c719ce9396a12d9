// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmnerf/error.hpp"

namespace mmnerf {

namespace {

constexpr uint32_t kPrimeY = 2654435761u;
constexpr uint32_t kPrimeZ = 805459861u;

struct LevelInfo {
  int resolution;
  bool dense;
  uint32_t stride;  // N + 1 for dense levels
};

std::vector<LevelInfo> level_infos(const EncodingConfig& cfg) {
  std::vector<LevelInfo> out(cfg.levels);
  for (int l = 0; l < cfg.levels; ++l) {
    out[l].resolution = level_resolution(cfg, l);
    out[l].dense = level_is_dense(cfg, l);
    out[l].stride = static_cast<uint32_t>(out[l].resolution + 1);
  }
  return out;
}

inline uint32_t slot_of(const LevelInfo& info, uint32_t mask, uint32_t ix, uint32_t iy, uint32_t iz) {
  if (info.dense) return ix + info.stride * (iy + info.stride * iz);
  return (ix ^ (iy * kPrimeY) ^ (iz * kPrimeZ)) & mask;
}

template <typename T>
inline void corners_for(const LevelInfo& info, uint32_t mask, const T* x, uint32_t* slots, T* weights) {
  uint32_t cell[3];
  T frac[3];
  const int n = info.resolution;
  for (int a = 0; a < 3; ++a) {
    const T pos = x[a] * static_cast<T>(n);
    int c = static_cast<int>(std::floor(pos));
    c = std::clamp(c, 0, n - 1);
    cell[a] = static_cast<uint32_t>(c);
    frac[a] = std::clamp(pos - static_cast<T>(c), T(0), T(1));
  }
  for (int k = 0; k < 8; ++k) {
    const uint32_t dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
    slots[k] = slot_of(info, mask, cell[0] + dx, cell[1] + dy, cell[2] + dz);
    weights[k] = (dx ? frac[0] : T(1) - frac[0]) * (dy ? frac[1] : T(1) - frac[1]) *
                 (dz ? frac[2] : T(1) - frac[2]);
  }
}

void check_unit_cube(const Vec3& x) {
  for (int a = 0; a < 3; ++a) {
    if (!(x[a] >= 0.0 && x[a] <= 1.0)) throw DomainError("position outside the unit cube");
  }
}

}  // namespace

void validate(const EncodingConfig& cfg) {
  if (cfg.levels < 1) throw DomainError("encoding needs at least one level");
  if (cfg.table_size < 2 || (cfg.table_size & (cfg.table_size - 1)) != 0) {
    throw DomainError("hash table size must be a power of two >= 2");
  }
  if (cfg.features_per_entry < 1) throw DomainError("features per entry must be >= 1");
  if (cfg.base_resolution < 2) throw DomainError("base resolution must be >= 2");
  if (!(cfg.growth > 1.0)) throw DomainError("growth factor must exceed 1");
  if (cfg.direction_degree < 1 || cfg.direction_degree > 4) throw DomainError("direction degree must be in [1, 4]");
  if (level_resolution(cfg, cfg.levels - 1) > (1 << 20)) throw DomainError("finest resolution too large");
}

int level_resolution(const EncodingConfig& cfg, int level) {
  return static_cast<int>(std::floor(cfg.base_resolution * std::pow(cfg.growth, level)));
}

bool level_is_dense(const EncodingConfig& cfg, int level) {
  const uint64_t side = static_cast<uint64_t>(level_resolution(cfg, level)) + 1;
  return side * side * side <= cfg.table_size;
}

uint32_t vertex_slot(const EncodingConfig& cfg, int level, uint32_t ix, uint32_t iy, uint32_t iz) {
  const LevelInfo info{level_resolution(cfg, level), level_is_dense(cfg, level),
                       static_cast<uint32_t>(level_resolution(cfg, level) + 1)};
  return slot_of(info, cfg.table_size - 1, ix, iy, iz);
}

template <typename T>
LevelCorners<T> level_corners(const EncodingConfig& cfg, int level, const T* x) {
  const LevelInfo info{level_resolution(cfg, level), level_is_dense(cfg, level),
                       static_cast<uint32_t>(level_resolution(cfg, level) + 1)};
  LevelCorners<T> out;
  corners_for(info, cfg.table_size - 1, x, out.slots.data(), out.weights.data());
  return out;
}

template <typename T>
std::vector<T> encode_position(std::span<const T> tables, const EncodingConfig& cfg, const Vec3& x) {
  check_unit_cube(x);
  if (tables.size() != cfg.param_count()) throw DimensionError("hash table size mismatch");
  const T xt[3] = {static_cast<T>(x[0]), static_cast<T>(x[1]), static_cast<T>(x[2])};
  const int F = cfg.features_per_entry;
  std::vector<T> out(cfg.output_dim(), T(0));
  for (int l = 0; l < cfg.levels; ++l) {
    const auto c = level_corners<T>(cfg, l, xt);
    for (int k = 0; k < 8; ++k) {
      const T* entry = tables.data() + table_offset(cfg, l, c.slots[k]);
      for (int f = 0; f < F; ++f) out[l * F + f] += c.weights[k] * entry[f];
    }
  }
  return out;
}

template <typename T>
void encode_position_backward(std::span<const T> tables, const EncodingConfig& cfg, const Vec3& x,
                              std::span<const T> upstream, std::span<T> grad) {
  check_unit_cube(x);
  if (tables.size() != cfg.param_count() || grad.size() != tables.size()) {
    throw DimensionError("hash gradient size mismatch");
  }
  if (upstream.size() != static_cast<size_t>(cfg.output_dim())) throw DimensionError("upstream size mismatch");
  const T xt[3] = {static_cast<T>(x[0]), static_cast<T>(x[1]), static_cast<T>(x[2])};
  const int F = cfg.features_per_entry;
  for (int l = 0; l < cfg.levels; ++l) {
    const auto c = level_corners<T>(cfg, l, xt);
    for (int k = 0; k < 8; ++k) {
      T* g = grad.data() + table_offset(cfg, l, c.slots[k]);
      for (int f = 0; f < F; ++f) g[f] += c.weights[k] * upstream[l * F + f];
    }
  }
}

template <typename T>
void encode_positions(std::span<const T> tables, const EncodingConfig& cfg, const MatrixX<T>& positions,
                      MatrixX<T>& features, EncodingCache<T>* cache) {
  const int M = static_cast<int>(positions.cols());
  const int L = cfg.levels;
  const int F = cfg.features_per_entry;
  const auto infos = level_infos(cfg);
  const uint32_t mask = cfg.table_size - 1;
  features.resize(cfg.output_dim(), M);
  if (cache) {
    cache->slots.resize(static_cast<size_t>(M) * L * 8);
    cache->weights.resize(static_cast<size_t>(M) * L * 8);
  }
  uint32_t slots[8];
  T weights[8];
  for (int m = 0; m < M; ++m) {
    T x[3];
    for (int a = 0; a < 3; ++a) x[a] = std::clamp(positions(a, m), T(0), T(1));
    T* out = features.data() + static_cast<size_t>(m) * features.rows();
    for (int l = 0; l < L; ++l) {
      uint32_t* s = cache ? cache->slots.data() + (static_cast<size_t>(m) * L + l) * 8 : slots;
      T* w = cache ? cache->weights.data() + (static_cast<size_t>(m) * L + l) * 8 : weights;
      corners_for(infos[l], mask, x, s, w);
      const T* level_table = tables.data() + static_cast<size_t>(l) * cfg.table_size * F;
      for (int f = 0; f < F; ++f) {
        T acc = 0;
        for (int k = 0; k < 8; ++k) acc += w[k] * level_table[static_cast<size_t>(s[k]) * F + f];
        out[l * F + f] = acc;
      }
    }
  }
}

template <typename T>
void encode_positions_backward(const EncodingConfig& cfg, const EncodingCache<T>& cache,
                               const MatrixX<T>& d_features, std::span<T> grad) {
  const int M = static_cast<int>(d_features.cols());
  const int L = cfg.levels;
  const int F = cfg.features_per_entry;
  for (int m = 0; m < M; ++m) {
    const T* d = d_features.data() + static_cast<size_t>(m) * d_features.rows();
    for (int l = 0; l < L; ++l) {
      const uint32_t* s = cache.slots.data() + (static_cast<size_t>(m) * L + l) * 8;
      const T* w = cache.weights.data() + (static_cast<size_t>(m) * L + l) * 8;
      T* level_grad = grad.data() + static_cast<size_t>(l) * cfg.table_size * F;
      for (int k = 0; k < 8; ++k) {
        T* g = level_grad + static_cast<size_t>(s[k]) * F;
        for (int f = 0; f < F; ++f) g[f] += w[k] * d[l * F + f];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Direction basis: real spherical harmonics, bands 0..3.

template <typename T>
void encode_direction(const T* d, int degree, T* out) {
  const T x = d[0], y = d[1], z = d[2];
  out[0] = T(0.28209479177387814);
  if (degree <= 1) return;
  out[1] = T(-0.48860251190291987) * y;
  out[2] = T(0.48860251190291987) * z;
  out[3] = T(-0.48860251190291987) * x;
  if (degree <= 2) return;
  const T xx = x * x, yy = y * y, zz = z * z;
  out[4] = T(1.0925484305920792) * x * y;
  out[5] = T(-1.0925484305920792) * y * z;
  out[6] = T(0.94617469575756008) * zz - T(0.31539156525252005);
  out[7] = T(-1.0925484305920792) * x * z;
  out[8] = T(0.54627421529603959) * (xx - yy);
  if (degree <= 3) return;
  out[9] = T(0.59004358992664352) * y * (-T(3) * xx + yy);
  out[10] = T(2.8906114426405538) * x * y * z;
  out[11] = T(0.45704579946446572) * y * (T(1) - T(5) * zz);
  out[12] = T(0.3731763325901154) * z * (T(5) * zz - T(3));
  out[13] = T(0.45704579946446572) * x * (T(1) - T(5) * zz);
  out[14] = T(1.4453057213202769) * z * (xx - yy);
  out[15] = T(0.59004358992664352) * x * (-xx + T(3) * yy);
}

std::vector<double> encode_direction(const Vec3& d, int degree) {
  if (degree < 1 || degree > 4) throw DomainError("direction degree must be in [1, 4]");
  if (!(std::abs(d.norm() - 1.0) <= 1e-3)) throw DomainError("direction is not unit length");
  std::vector<double> out(static_cast<size_t>(degree) * degree);
  encode_direction(d.data(), degree, out.data());
  return out;
}

Eigen::MatrixXd encode_direction_jacobian(const Vec3& d, int degree) {
  if (degree < 1 || degree > 4) throw DomainError("direction degree must be in [1, 4]");
  const double x = d[0], y = d[1], z = d[2];
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(degree * degree, 3);
  if (degree >= 2) {
    J(1, 1) = -0.48860251190291987;
    J(2, 2) = 0.48860251190291987;
    J(3, 0) = -0.48860251190291987;
  }
  if (degree >= 3) {
    const double c = 1.0925484305920792;
    J(4, 0) = c * y;
    J(4, 1) = c * x;
    J(5, 1) = -c * z;
    J(5, 2) = -c * y;
    J(6, 2) = 2.0 * 0.94617469575756008 * z;
    J(7, 0) = -c * z;
    J(7, 2) = -c * x;
    J(8, 0) = 2.0 * 0.54627421529603959 * x;
    J(8, 1) = -2.0 * 0.54627421529603959 * y;
  }
  if (degree >= 4) {
    const double a = 0.59004358992664352, b = 2.8906114426405538, c = 0.45704579946446572,
                 e = 0.3731763325901154, f = 1.4453057213202769;
    J(9, 0) = a * y * (-6.0 * x);
    J(9, 1) = a * (-3.0 * x * x + 3.0 * y * y);
    J(10, 0) = b * y * z;
    J(10, 1) = b * x * z;
    J(10, 2) = b * x * y;
    J(11, 1) = c * (1.0 - 5.0 * z * z);
    J(11, 2) = c * y * (-10.0 * z);
    J(12, 2) = e * (15.0 * z * z - 3.0);
    J(13, 0) = c * (1.0 - 5.0 * z * z);
    J(13, 2) = c * x * (-10.0 * z);
    J(14, 0) = f * z * 2.0 * x;
    J(14, 1) = -f * z * 2.0 * y;
    J(14, 2) = f * (x * x - y * y);
    J(15, 0) = a * (-3.0 * x * x + 3.0 * y * y);
    J(15, 1) = a * x * 6.0 * y;
  }
  return J;
}

#define MMNERF_INSTANTIATE(T)                                                                              \
  template LevelCorners<T> level_corners<T>(const EncodingConfig&, int, const T*);                         \
  template std::vector<T> encode_position<T>(std::span<const T>, const EncodingConfig&, const Vec3&);      \
  template void encode_position_backward<T>(std::span<const T>, const EncodingConfig&, const Vec3&,        \
                                            std::span<const T>, std::span<T>);                             \
  template void encode_positions<T>(std::span<const T>, const EncodingConfig&, const MatrixX<T>&,         \
                                    MatrixX<T>&, EncodingCache<T>*);                                      \
  template void encode_positions_backward<T>(const EncodingConfig&, const EncodingCache<T>&,               \
                                             const MatrixX<T>&, std::span<T>);                            \
  template void encode_direction<T>(const T*, int, T*);

MMNERF_INSTANTIATE(float)
MMNERF_INSTANTIATE(double)

#undef MMNERF_INSTANTIATE

}  // namespace mmnerf
