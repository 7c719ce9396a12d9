// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/mlp.hpp"

#include "mmnerf/error.hpp"

namespace mmnerf {

MlpLayout MlpLayout::make(std::vector<int> dims, size_t offset) {
  if (dims.size() < 2) throw DomainError("an MLP needs at least one layer");
  MlpLayout l;
  l.dims = std::move(dims);
  l.begin = offset;
  size_t at = offset;
  for (size_t k = 0; k + 1 < l.dims.size(); ++k) {
    if (l.dims[k] <= 0 || l.dims[k + 1] <= 0) throw DomainError("MLP dimensions must be positive");
    l.weight_offsets.push_back(at);
    at += static_cast<size_t>(l.dims[k + 1]) * l.dims[k];
    l.bias_offsets.push_back(at);
    at += static_cast<size_t>(l.dims[k + 1]);
  }
  l.end = at;
  return l;
}

template <typename T>
void mlp_forward(const MlpLayout& layout, std::span<const T> params, const MatrixX<T>& input, MlpTape<T>& tape) {
  using ConstMap = Eigen::Map<const MatrixX<T>>;
  using ConstVec = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  if (input.rows() != layout.input_dim()) throw DimensionError("MLP input dimension mismatch");
  const int L = layout.layers();
  tape.outputs.resize(L);
  const MatrixX<T>* x = &input;
  for (int k = 0; k < L; ++k) {
    ConstMap W(params.data() + layout.weight_offsets[k], layout.dims[k + 1], layout.dims[k]);
    ConstVec b(params.data() + layout.bias_offsets[k], layout.dims[k + 1]);
    MatrixX<T>& z = tape.outputs[k];
    z.noalias() = W * (*x);
    z.colwise() += b;
    if (k + 1 < L) z = z.cwiseMax(T(0));
    x = &z;
  }
}

template <typename T>
void mlp_backward(const MlpLayout& layout, std::span<const T> params, const MatrixX<T>& input,
                  const MlpTape<T>& tape, MatrixX<T> d_output, std::span<T> grad, MatrixX<T>* d_input) {
  using ConstMap = Eigen::Map<const MatrixX<T>>;
  using Map = Eigen::Map<MatrixX<T>>;
  using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  const int L = layout.layers();
  if (static_cast<int>(tape.outputs.size()) != L) throw DimensionError("MLP tape does not match layout");
  if (d_output.rows() != layout.output_dim() || d_output.cols() != input.cols()) {
    throw DimensionError("MLP upstream gradient shape mismatch");
  }
  MatrixX<T> d = std::move(d_output);
  MatrixX<T> d_prev;
  Eigen::Matrix<T, Eigen::Dynamic, 1> bias_sum;
  for (int k = L - 1; k >= 0; --k) {
    const MatrixX<T>& x = k == 0 ? input : tape.outputs[k - 1];
    Map dW(grad.data() + layout.weight_offsets[k], layout.dims[k + 1], layout.dims[k]);
    VecMap db(grad.data() + layout.bias_offsets[k], layout.dims[k + 1]);
    dW.noalias() += d * x.transpose();
    // Reduce into owned (aligned) storage first: a reduction written straight
    // into `grad` would round differently depending on its address.
    bias_sum = d.rowwise().sum();
    db += bias_sum;
    if (k == 0 && d_input == nullptr) break;
    ConstMap W(params.data() + layout.weight_offsets[k], layout.dims[k + 1], layout.dims[k]);
    d_prev.noalias() = W.transpose() * d;
    if (k > 0) {
      d_prev = (x.array() > T(0)).select(d_prev, T(0));
      d.swap(d_prev);
    } else {
      *d_input = std::move(d_prev);
    }
  }
}

template void mlp_forward<float>(const MlpLayout&, std::span<const float>, const MatrixX<float>&, MlpTape<float>&);
template void mlp_forward<double>(const MlpLayout&, std::span<const double>, const MatrixX<double>&,
                                  MlpTape<double>&);
template void mlp_backward<float>(const MlpLayout&, std::span<const float>, const MatrixX<float>&,
                                  const MlpTape<float>&, MatrixX<float>, std::span<float>, MatrixX<float>*);
template void mlp_backward<double>(const MlpLayout&, std::span<const double>, const MatrixX<double>&,
                                   const MlpTape<double>&, MatrixX<double>, std::span<double>, MatrixX<double>*);

}  // namespace mmnerf
