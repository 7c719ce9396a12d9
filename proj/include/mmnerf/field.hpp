// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmnerf/encoding.hpp"
#include "mmnerf/geometry.hpp"
#include "mmnerf/mlp.hpp"
#include "mmnerf/types.hpp"

namespace mmnerf {

/// Density MLP output: sigma logit followed by the 15-dim geometric descriptor.
inline constexpr int kDensityOutput = 16;
inline constexpr int kDescriptorDim = kDensityOutput - 1;

/// Fully connected layer counts and widths. `*_layers` counts weight matrices.
struct NetworkDims {
  int density_hidden = 64;
  int density_layers = 3;
  int color_hidden = 32;
  int color_layers = 3;
};

struct ModelConfig {
  EncodingConfig encoding;
  NetworkDims dims;
};

void validate(const ModelConfig& cfg);

/// Named slice of the flat parameter vector.
struct Segment {
  std::string name;
  size_t offset = 0;
  size_t size = 0;
};

/// Pre-activation of the density channel is truncated to this range, so
/// sigma = exp(logit) stays within [exp(-15), 1e4].
inline constexpr double kMinDensityLogit = -15.0;
inline constexpr double kMaxDensityLogit = 9.210340371976184;  // ln(1e4)

/// All trainable parameters of one radiance field, in one flat vector.
///
/// Layout: hash tables, density MLP, color MLP, then (SC only) the separate
/// modality MLP. The color head emits 3 channels, or 4 (RGB + modality) for RGBX.
template <typename T>
struct FieldModel {
  ModelConfig config;
  Strategy strategy = Strategy::kTS;
  ModelRole role = ModelRole::kRgb;

  std::vector<T> params;
  std::vector<Segment> segments;

  size_t hash_offset = 0;
  size_t hash_size = 0;
  MlpLayout density;
  MlpLayout color;
  std::optional<MlpLayout> separate;

  /// Number of value channels produced per sample: 3, or 4 when a modality
  /// channel exists (RGBX color head or SC separate head).
  int value_channels() const { return strategy == Strategy::kRGBX || strategy == Strategy::kSC ? 4 : 3; }
  /// Value channel that carries the second modality.
  int modality_channel() const { return value_channels() == 4 ? 3 : 0; }
  bool renders_color() const { return role != ModelRole::kModality; }
  bool renders_modality() const { return role != ModelRole::kRgb; }

  std::span<const T> hash_tables() const { return {params.data() + hash_offset, hash_size}; }
  const Segment& segment(const std::string& name) const;
};

/// Lays out a zero-initialized model. RGBX and SC models are always ModelRole::kJoint;
/// TS and FT models take kRgb or kModality.
template <typename T>
FieldModel<T> make_model(const ModelConfig& cfg, Strategy strategy, ModelRole role);

/// Deterministic initialization: hash entries uniform in [-1e-4, 1e-4], MLP
/// weights Glorot-uniform, biases zero. Each segment draws from its own stream
/// seeded by (seed, segment name), so shared segments of models with different
/// strategies start identical.
template <typename T>
FieldModel<T> init_model(const ModelConfig& cfg, Strategy strategy, ModelRole role, uint64_t seed);

template <typename To, typename From>
FieldModel<To> convert_model(const FieldModel<From>& src);

/// Verifies the structural invariants (segment table, head widths, finite values).
template <typename T>
void validate_model(const FieldModel<T>& model);

enum class FieldQuery { kColor, kModality, kBoth };

struct FieldOutput {
  double sigma = 0.0;
  std::array<double, 3> color{};
  std::optional<double> modality;
};

/// Single-point evaluation of F(x, d). Throws DomainError when the query asks for
/// a channel the model does not render, or x/d are invalid.
template <typename T>
FieldOutput field_forward(const FieldModel<T>& model, const Vec3& x, const Vec3& d, FieldQuery want);

/// Batched evaluation over M samples.
template <typename T>
struct FieldBatch {
  MatrixX<T> positions;     // 3 x M
  MatrixX<T> dir_features;  // direction_dim x M

  std::vector<T> sigma;     // M
  MatrixX<T> values;        // value_channels x M, in [0,1]

  // Tape for the backward pass.
  EncodingCache<T> enc_cache;
  MatrixX<T> features;
  MlpTape<T> density_tape;
  MatrixX<T> head_input;
  MlpTape<T> color_tape;
  MlpTape<T> separate_tape;

  int size() const { return static_cast<int>(positions.cols()); }
};

template <typename T>
void field_forward_batch(const FieldModel<T>& model, FieldBatch<T>& batch);

/// Upstream gradients for a batch. Density gradients are split by origin so the
/// SC strategy can drop everything the modality channel sends towards geometry.
template <typename T>
struct FieldUpstream {
  std::vector<T> d_sigma_color;     // from color channels (M)
  std::vector<T> d_sigma_modality;  // from the modality channel (M, or empty for none)
  MatrixX<T> d_values;              // value_channels x M
};

/// Accumulates parameter gradients into `grad` (full parameter vector).
/// For SC, the modality channel's gradient never reaches the density MLP or the
/// hash tables. For RGBX it does, through both sigma and the descriptor.
template <typename T>
void field_backward_batch(const FieldModel<T>& model, const FieldBatch<T>& batch,
                          const FieldUpstream<T>& upstream, std::span<T> grad);

/// Convenience wrapper: evaluates the batch for (x, d) pairs and returns the
/// full parameter gradient.
template <typename T>
std::vector<T> field_backward(const FieldModel<T>& model, std::span<const Vec3> xs,
                              std::span<const Vec3> ds, const FieldUpstream<T>& upstream);

/// Fills a batch's inputs from positions and per-sample directions.
template <typename T>
void set_batch_inputs(const FieldModel<T>& model, FieldBatch<T>& batch, std::span<const Vec3> xs,
                      std::span<const Vec3> ds);

}  // namespace mmnerf
