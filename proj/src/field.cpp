// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/field.hpp"

#include <algorithm>
#include <cmath>

#include "mmnerf/error.hpp"
#include "mmnerf/random.hpp"

namespace mmnerf {

namespace {

std::vector<int> mlp_dims(int in, int hidden, int layers, int out) {
  std::vector<int> dims{in};
  for (int k = 0; k + 1 < layers; ++k) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

void add_mlp_segments(std::vector<Segment>& segs, const std::string& prefix, const MlpLayout& l) {
  for (int k = 0; k < l.layers(); ++k) {
    const size_t wsize = static_cast<size_t>(l.dims[k + 1]) * l.dims[k];
    segs.push_back({prefix + "." + std::to_string(k) + ".weight", l.weight_offsets[k], wsize});
    segs.push_back({prefix + "." + std::to_string(k) + ".bias", l.bias_offsets[k],
                    static_cast<size_t>(l.dims[k + 1])});
  }
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

void validate(const ModelConfig& cfg) {
  validate(cfg.encoding);
  const auto& d = cfg.dims;
  if (d.density_hidden < 1 || d.color_hidden < 1) throw DomainError("hidden widths must be positive");
  if (d.density_layers < 1 || d.color_layers < 1) throw DomainError("layer counts must be positive");
}

template <typename T>
const Segment& FieldModel<T>::segment(const std::string& name) const {
  for (const auto& s : segments)
    if (s.name == name) return s;
  throw DomainError("no parameter segment named " + name);
}

template <typename T>
FieldModel<T> make_model(const ModelConfig& cfg, Strategy strategy, ModelRole role) {
  validate(cfg);
  const bool joint = strategy == Strategy::kRGBX || strategy == Strategy::kSC;
  if (joint != (role == ModelRole::kJoint)) {
    throw DomainError("strategy " + to_string(strategy) + " cannot build a model with role " + to_string(role));
  }
  FieldModel<T> m;
  m.config = cfg;
  m.strategy = strategy;
  m.role = role;
  m.hash_offset = 0;
  m.hash_size = cfg.encoding.param_count();
  m.segments.push_back({"encoding.hash_tables", 0, m.hash_size});

  const auto& d = cfg.dims;
  m.density = MlpLayout::make(mlp_dims(cfg.encoding.output_dim(), d.density_hidden, d.density_layers, kDensityOutput),
                              m.hash_size);
  add_mlp_segments(m.segments, "density", m.density);

  const int head_in = kDescriptorDim + cfg.encoding.direction_dim();
  const int color_out = strategy == Strategy::kRGBX ? 4 : 3;
  m.color = MlpLayout::make(mlp_dims(head_in, d.color_hidden, d.color_layers, color_out), m.density.end);
  add_mlp_segments(m.segments, "color", m.color);
  size_t end = m.color.end;
  if (strategy == Strategy::kSC) {
    m.separate = MlpLayout::make(mlp_dims(head_in, d.color_hidden, d.color_layers, 1), end);
    add_mlp_segments(m.segments, "separate", *m.separate);
    end = m.separate->end;
  }
  m.params.assign(end, T(0));
  return m;
}

template <typename T>
FieldModel<T> init_model(const ModelConfig& cfg, Strategy strategy, ModelRole role, uint64_t seed) {
  FieldModel<T> m = make_model<T>(cfg, strategy, role);
  for (const Segment& s : m.segments) {
    Rng rng(mix_seed(seed, hash_name(s.name)));
    T* p = m.params.data() + s.offset;
    if (s.name == "encoding.hash_tables") {
      for (size_t i = 0; i < s.size; ++i) p[i] = static_cast<T>(rng.uniform(-1e-4, 1e-4));
    } else if (s.name.ends_with(".weight")) {
      // fan_in/fan_out from the owning layout
      const MlpLayout* layouts[3] = {&m.density, &m.color, m.separate ? &*m.separate : nullptr};
      int fan_in = 0, fan_out = 0;
      for (const MlpLayout* l : layouts) {
        if (!l) continue;
        for (int k = 0; k < l->layers(); ++k)
          if (l->weight_offsets[k] == s.offset) {
            fan_in = l->dims[k];
            fan_out = l->dims[k + 1];
          }
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (size_t i = 0; i < s.size; ++i) p[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
  }
  return m;
}

template <typename To, typename From>
FieldModel<To> convert_model(const FieldModel<From>& src) {
  FieldModel<To> m;
  m.config = src.config;
  m.strategy = src.strategy;
  m.role = src.role;
  m.params.assign(src.params.begin(), src.params.end());
  m.segments = src.segments;
  m.hash_offset = src.hash_offset;
  m.hash_size = src.hash_size;
  m.density = src.density;
  m.color = src.color;
  m.separate = src.separate;
  return m;
}

template <typename T>
void validate_model(const FieldModel<T>& m) {
  std::vector<Segment> segs = m.segments;
  std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.offset < b.offset; });
  size_t at = 0;
  for (const auto& s : segs) {
    if (s.offset != at) throw FormatError("segment table has a gap or overlap at " + s.name);
    at += s.size;
  }
  if (at != m.params.size()) throw FormatError("segment table does not cover the parameter vector");
  if (m.density.output_dim() != kDensityOutput) throw FormatError("density MLP must output 16 channels");
  const bool rgbx = m.strategy == Strategy::kRGBX;
  if (rgbx != (m.color.output_dim() == 4)) throw FormatError("color head width does not match strategy");
  if ((m.strategy == Strategy::kSC) != m.separate.has_value()) {
    throw FormatError("separate head presence does not match strategy");
  }
  for (const auto& s : m.segments)
    for (size_t i = 0; i < s.size; ++i)
      if (!std::isfinite(static_cast<double>(m.params[s.offset + i]))) {
        throw FormatError("non-finite parameter in segment " + s.name);
      }
}

template <typename T>
void set_batch_inputs(const FieldModel<T>& model, FieldBatch<T>& batch, std::span<const Vec3> xs,
                      std::span<const Vec3> ds) {
  if (xs.size() != ds.size()) throw DimensionError("positions and directions differ in count");
  const int M = static_cast<int>(xs.size());
  const int deg = model.config.encoding.direction_degree;
  batch.positions.resize(3, M);
  batch.dir_features.resize(model.config.encoding.direction_dim(), M);
  for (int m = 0; m < M; ++m) {
    for (int a = 0; a < 3; ++a) batch.positions(a, m) = static_cast<T>(xs[m][a]);
    const T d[3] = {static_cast<T>(ds[m][0]), static_cast<T>(ds[m][1]), static_cast<T>(ds[m][2])};
    encode_direction(d, deg, batch.dir_features.col(m).data());
  }
}

template <typename T>
void field_forward_batch(const FieldModel<T>& model, FieldBatch<T>& b) {
  const int M = b.size();
  const std::span<const T> params(model.params);
  encode_positions(model.hash_tables(), model.config.encoding, b.positions, b.features, &b.enc_cache);
  mlp_forward(model.density, params, b.features, b.density_tape);
  const MatrixX<T>& dens = b.density_tape.outputs.back();

  b.sigma.resize(M);
  for (int m = 0; m < M; ++m) {
    const T logit = std::clamp(dens(0, m), T(kMinDensityLogit), T(kMaxDensityLogit));
    b.sigma[m] = std::exp(logit);
  }

  const int dir_dim = static_cast<int>(b.dir_features.rows());
  b.head_input.resize(kDescriptorDim + dir_dim, M);
  b.head_input.topRows(kDescriptorDim) = dens.bottomRows(kDescriptorDim);
  b.head_input.bottomRows(dir_dim) = b.dir_features;

  mlp_forward(model.color, params, b.head_input, b.color_tape);
  const MatrixX<T>& logits = b.color_tape.outputs.back();
  b.values.resize(model.value_channels(), M);
  b.values.topRows(logits.rows()) = logits.unaryExpr([](T v) { return sigmoid(v); });
  if (model.separate) {
    mlp_forward(*model.separate, params, b.head_input, b.separate_tape);
    b.values.row(3) = b.separate_tape.outputs.back().row(0).unaryExpr([](T v) { return sigmoid(v); });
  }
}

template <typename T>
void field_backward_batch(const FieldModel<T>& model, const FieldBatch<T>& b, const FieldUpstream<T>& up,
                          std::span<T> grad) {
  const int M = b.size();
  if (grad.size() != model.params.size()) throw DimensionError("gradient buffer size mismatch");
  if (up.d_values.rows() != model.value_channels() || up.d_values.cols() != M ||
      static_cast<int>(up.d_sigma_color.size()) != M ||
      (!up.d_sigma_modality.empty() && static_cast<int>(up.d_sigma_modality.size()) != M)) {
    throw DimensionError("upstream gradient shape mismatch");
  }
  const std::span<const T> params(model.params);
  const bool add_modality_sigma = model.strategy != Strategy::kSC && !up.d_sigma_modality.empty();

  // Color head: sigmoid derivative, then MLP.
  const int color_rows = model.color.output_dim();
  MatrixX<T> d_logits = up.d_values.topRows(color_rows).cwiseProduct(
      b.values.topRows(color_rows).unaryExpr([](T s) { return s * (T(1) - s); }));
  MatrixX<T> d_head;
  mlp_backward(model.color, params, b.head_input, b.color_tape, std::move(d_logits), grad, &d_head);

  // Separate head (SC): its input gradient is discarded, so the modality loss
  // never reaches the descriptor, the density MLP or the hash tables.
  if (model.separate) {
    MatrixX<T> d_sep = up.d_values.row(3).cwiseProduct(
        b.values.row(3).unaryExpr([](T s) { return s * (T(1) - s); }));
    mlp_backward(*model.separate, params, b.head_input, b.separate_tape, std::move(d_sep), grad,
                 static_cast<MatrixX<T>*>(nullptr));
  }

  const MatrixX<T>& dens = b.density_tape.outputs.back();
  MatrixX<T> d_dens(kDensityOutput, M);
  for (int m = 0; m < M; ++m) {
    T ds = up.d_sigma_color[m];
    if (add_modality_sigma) ds += up.d_sigma_modality[m];
    const T logit = dens(0, m);
    const bool inside = logit > T(kMinDensityLogit) && logit < T(kMaxDensityLogit);
    d_dens(0, m) = inside ? ds * b.sigma[m] : T(0);
  }
  d_dens.bottomRows(kDescriptorDim) = d_head.topRows(kDescriptorDim);

  MatrixX<T> d_features;
  mlp_backward(model.density, params, b.features, b.density_tape, std::move(d_dens), grad, &d_features);
  encode_positions_backward(model.config.encoding, b.enc_cache, d_features,
                            grad.subspan(model.hash_offset, model.hash_size));
}

template <typename T>
FieldOutput field_forward(const FieldModel<T>& model, const Vec3& x, const Vec3& d, FieldQuery want) {
  for (int a = 0; a < 3; ++a)
    if (!(x[a] >= 0.0 && x[a] <= 1.0)) throw DomainError("position outside the unit cube");
  if (!(std::abs(d.norm() - 1.0) <= 1e-6)) throw DomainError("direction is not unit length");
  const bool need_color = want != FieldQuery::kModality;
  const bool need_modality = want != FieldQuery::kColor;
  if (need_color && !model.renders_color()) throw DomainError("model does not render color");
  if (need_modality && !model.renders_modality()) throw DomainError("model does not render the modality");

  FieldBatch<T> b;
  const Vec3 xs[1] = {x};
  const Vec3 ds[1] = {d};
  set_batch_inputs(model, b, xs, ds);
  field_forward_batch(model, b);

  FieldOutput out;
  out.sigma = static_cast<double>(b.sigma[0]);
  if (need_color)
    for (int c = 0; c < 3; ++c) out.color[c] = static_cast<double>(b.values(c, 0));
  if (need_modality) out.modality = static_cast<double>(b.values(model.modality_channel(), 0));
  return out;
}

template <typename T>
std::vector<T> field_backward(const FieldModel<T>& model, std::span<const Vec3> xs, std::span<const Vec3> ds,
                              const FieldUpstream<T>& upstream) {
  FieldBatch<T> b;
  set_batch_inputs(model, b, xs, ds);
  field_forward_batch(model, b);
  std::vector<T> grad(model.params.size(), T(0));
  field_backward_batch(model, b, upstream, std::span<T>(grad));
  return grad;
}

#define MMNERF_INSTANTIATE(T)                                                                                \
  template struct FieldModel<T>;                                                                             \
  template FieldModel<T> make_model<T>(const ModelConfig&, Strategy, ModelRole);                             \
  template FieldModel<T> init_model<T>(const ModelConfig&, Strategy, ModelRole, uint64_t);                   \
  template void validate_model<T>(const FieldModel<T>&);                                                     \
  template void set_batch_inputs<T>(const FieldModel<T>&, FieldBatch<T>&, std::span<const Vec3>,             \
                                    std::span<const Vec3>);                                                  \
  template void field_forward_batch<T>(const FieldModel<T>&, FieldBatch<T>&);                                \
  template void field_backward_batch<T>(const FieldModel<T>&, const FieldBatch<T>&, const FieldUpstream<T>&, \
                                        std::span<T>);                                                       \
  template FieldOutput field_forward<T>(const FieldModel<T>&, const Vec3&, const Vec3&, FieldQuery);         \
  template std::vector<T> field_backward<T>(const FieldModel<T>&, std::span<const Vec3>,                     \
                                            std::span<const Vec3>, const FieldUpstream<T>&);

MMNERF_INSTANTIATE(float)
MMNERF_INSTANTIATE(double)
#undef MMNERF_INSTANTIATE

template FieldModel<double> convert_model<double, float>(const FieldModel<float>&);
template FieldModel<float> convert_model<float, double>(const FieldModel<double>&);
template FieldModel<float> convert_model<float, float>(const FieldModel<float>&);
template FieldModel<double> convert_model<double, double>(const FieldModel<double>&);

}  // namespace mmnerf
