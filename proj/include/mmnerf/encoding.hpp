// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mmnerf/geometry.hpp"
#include "mmnerf/matrix.hpp"

namespace mmnerf {

/// Multiresolution hash grid plus fixed direction basis.
struct EncodingConfig {
  int levels = 8;
  uint32_t table_size = 1u << 14;  // entries per level, power of two
  int features_per_entry = 2;
  int base_resolution = 16;
  double growth = 1.5;
  int direction_degree = 4;  // number of spherical-harmonic bands

  int output_dim() const { return levels * features_per_entry; }
  int direction_dim() const { return direction_degree * direction_degree; }
  size_t param_count() const {
    return static_cast<size_t>(levels) * table_size * features_per_entry;
  }
};

void validate(const EncodingConfig& cfg);

/// floor(N_min * b^level).
int level_resolution(const EncodingConfig& cfg, int level);

/// True when the (N+1)^3 vertex lattice of the level fits in the table and is
/// indexed directly instead of hashed.
bool level_is_dense(const EncodingConfig& cfg, int level);

/// Table slot of an integer lattice vertex at a given level.
uint32_t vertex_slot(const EncodingConfig& cfg, int level, uint32_t ix, uint32_t iy, uint32_t iz);

/// Offset of (level, slot, feature 0) inside the flat table block.
inline size_t table_offset(const EncodingConfig& cfg, int level, uint32_t slot) {
  return (static_cast<size_t>(level) * cfg.table_size + slot) * cfg.features_per_entry;
}

/// Eight corner slots and trilinear weights of one level for one position.
template <typename T>
struct LevelCorners {
  std::array<uint32_t, 8> slots;
  std::array<T, 8> weights;
};

template <typename T>
LevelCorners<T> level_corners(const EncodingConfig& cfg, int level, const T* x);

/// Features of length L*F for x in [0,1]^3. Throws DomainError outside the cube.
template <typename T>
std::vector<T> encode_position(std::span<const T> tables, const EncodingConfig& cfg, const Vec3& x);

/// Accumulates d(features)/d(tables)^T * upstream into `grad` (same size as tables).
template <typename T>
void encode_position_backward(std::span<const T> tables, const EncodingConfig& cfg, const Vec3& x,
                              std::span<const T> upstream, std::span<T> grad);

/// Per-sample corner cache kept between the batched forward and backward passes.
template <typename T>
struct EncodingCache {
  std::vector<uint32_t> slots;  // M * L * 8
  std::vector<T> weights;       // M * L * 8
};

/// Batched encoding. `positions` is 3 x M (clamped to the unit cube), the output
/// is (L*F) x M.
template <typename T>
void encode_positions(std::span<const T> tables, const EncodingConfig& cfg,
                      const MatrixX<T>& positions, MatrixX<T>& features,
                      EncodingCache<T>* cache);

/// Scatters (L*F) x M feature gradients into `grad`.
template <typename T>
void encode_positions_backward(const EncodingConfig& cfg, const EncodingCache<T>& cache,
                               const MatrixX<T>& d_features,
                               std::span<T> grad);

/// Real spherical harmonics of d up to `degree` bands (degree^2 values), 1 <= degree <= 4.
template <typename T>
void encode_direction(const T* d, int degree, T* out);

/// Checked variant; throws DomainError when |d| deviates from 1 by more than 1e-3.
std::vector<double> encode_direction(const Vec3& d, int degree);

/// degree^2 x 3 Jacobian of the basis with respect to the direction components.
/// Direction gradients are not propagated during training; this exists for
/// verification.
Eigen::MatrixXd encode_direction_jacobian(const Vec3& d, int degree);

}  // namespace mmnerf
