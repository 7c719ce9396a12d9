// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmnerf/matrix.hpp"

namespace mmnerf {

/// Placement of a fully connected ReLU network inside a flat parameter vector.
/// Layer k has a column-major (dims[k+1] x dims[k]) weight followed by its bias.
/// Every layer but the last is followed by ReLU; the last is linear.
struct MlpLayout {
  std::vector<int> dims;
  std::vector<size_t> weight_offsets;
  std::vector<size_t> bias_offsets;
  size_t begin = 0;
  size_t end = 0;

  static MlpLayout make(std::vector<int> dims, size_t offset);

  int layers() const { return static_cast<int>(dims.size()) - 1; }
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  size_t param_count() const { return end - begin; }
};

/// Post-activation outputs of every layer; the last entry holds the linear output.
template <typename T>
struct MlpTape {
  std::vector<MatrixX<T>> outputs;
};

template <typename T>
void mlp_forward(const MlpLayout& layout, std::span<const T> params, const MatrixX<T>& input,
                 MlpTape<T>& tape);

/// Backpropagates `d_output` (consumed) and accumulates parameter gradients into
/// `grad`, which spans the full parameter vector. When `d_input` is non-null it
/// receives the gradient with respect to the input.
template <typename T>
void mlp_backward(const MlpLayout& layout, std::span<const T> params, const MatrixX<T>& input,
                  const MlpTape<T>& tape, MatrixX<T> d_output, std::span<T> grad,
                  MatrixX<T>* d_input);

}  // namespace mmnerf
