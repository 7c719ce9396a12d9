// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "mmnerf/error.hpp"
#include "mmnerf/field.hpp"
#include "mmnerf/random.hpp"
#include "mmnerf/renderer.hpp"
#include "test_support.hpp"

using namespace mmnerf;
using mmnerf::testing::ref_composite;

namespace {

Ray segment_ray(double t0, double t1) {
  Ray r;
  r.origin = Vec3(0.5, 0.5, 1.5);
  r.direction = Vec3(0, 0, -1);
  r.t_near = t0;
  r.t_far = t1;
  return r;
}

RaySampleSet samples_from(const std::vector<double>& ts, const std::vector<double>& ds) {
  RaySampleSet s;
  s.ts = ts;
  s.deltas = ds;
  s.positions.assign(ts.size(), Vec3(0.5, 0.5, 0.5));
  return s;
}

std::vector<FieldOutput> outputs_from(const std::vector<double>& sigma, const std::vector<double>& vals) {
  std::vector<FieldOutput> out(sigma.size());
  for (size_t i = 0; i < sigma.size(); ++i) {
    out[i].sigma = sigma[i];
    for (int c = 0; c < 3; ++c) out[i].color[c] = vals[i * 3 + c];
    out[i].modality = vals[i * 3];
  }
  return out;
}

Camera small_camera(int w, int h) {
  Camera c;
  c.width = w;
  c.height = h;
  c.fx = c.fy = 1.1 * w;
  c.cx = 0.5 * w;
  c.cy = 0.5 * h;
  c.pose = look_at(Vec3(0.5, -1.0, 0.9), Vec3(0.5, 0.5, 0.5));
  return c;
}

}  // namespace

TEST_CASE("uniform sampling places midpoints") {
  const auto a = sample_ray(segment_ray(0, 1), 1, SamplingMode::kUniform);
  REQUIRE(a.size() == 1);
  CHECK(a.ts[0] == 0.5);
  CHECK(a.deltas[0] == 0.5);
  const auto b = sample_ray(segment_ray(0, 2), 4, SamplingMode::kUniform);
  REQUIRE(b.size() == 4);
  const double expect[4] = {0.25, 0.75, 1.25, 1.75};
  for (int i = 0; i < 4; ++i) CHECK(b.ts[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  for (int i = 0; i < 3; ++i) CHECK(b.deltas[i] == doctest::Approx(0.5));
  CHECK(b.deltas[3] == doctest::Approx(0.25));
  CHECK((b.positions[1] - Vec3(0.5, 0.5, 1.5 - 0.75)).norm() < 1e-15);
}

TEST_CASE("stratified sampling is reproducible and stays in its bins") {
  Rng r1(5), r2(5);
  const Ray ray = segment_ray(0.2, 1.4);
  const auto a = sample_ray(ray, 16, SamplingMode::kStratified, &r1);
  const auto b = sample_ray(ray, 16, SamplingMode::kStratified, &r2);
  CHECK(a.ts == b.ts);
  const double w = 1.2 / 16;
  for (int i = 0; i < 16; ++i) {
    CHECK(a.ts[i] >= 0.2 + i * w - 1e-12);
    CHECK(a.ts[i] <= 0.2 + (i + 1) * w + 1e-12);
    CHECK(a.deltas[i] > 0.0);
    if (i > 0) CHECK(a.ts[i] > a.ts[i - 1]);
  }
  CHECK_THROWS_AS(sample_ray(ray, 16, SamplingMode::kStratified, nullptr), DomainError);
}

TEST_CASE("sampling rejects bad counts and empty intervals") {
  CHECK_THROWS_AS(sample_ray(segment_ray(0, 1), 0, SamplingMode::kUniform), DomainError);
  CHECK_THROWS_AS(sample_ray(segment_ray(1, 1), 4, SamplingMode::kUniform), DomainError);
}

TEST_CASE("composite: transparent, opaque and invalid inputs") {
  const auto s = samples_from({0.1, 0.2, 0.3}, {0.1, 0.1, 0.1});
  const auto clear = composite(s, outputs_from({0, 0, 0}, std::vector<double>(9, 0.7)), Channel::kColor);
  CHECK(clear.value[0] == 0.0);
  CHECK(clear.accumulation == 0.0);
  for (double t : clear.transmittances) CHECK(t == 1.0);
  CHECK(clear.transmittance == 1.0);

  const auto op = composite(s, outputs_from({200.0, 1.0, 1.0}, {0.2, 0.4, 0.6, 1, 1, 1, 1, 1, 1}), Channel::kColor);
  CHECK(op.value[0] == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(op.value[2] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(op.accumulation == doctest::Approx(1.0).epsilon(1e-6));

  CHECK_THROWS_AS(composite(s, outputs_from({0.1, -0.1, 0.0}, std::vector<double>(9, 0.5)), Channel::kColor),
                  DomainError);
  CHECK_THROWS_AS(composite(s, outputs_from({0.1, 0.1}, std::vector<double>(6, 0.5)), Channel::kColor),
                  DimensionError);
}

TEST_CASE("composite matches a running-product accumulator and conserves weight") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 16;
    std::vector<double> ts, ds, sigma, vals;
    double t = rng.uniform(0, 0.5);
    for (int i = 0; i < n; ++i) {
      const double d = rng.uniform(0.01, 0.2);
      ts.push_back(t);
      ds.push_back(d);
      t += d;
      sigma.push_back(rng.uniform() < 0.3 ? 0.0 : rng.uniform(0, 30));
      for (int c = 0; c < 3; ++c) vals.push_back(rng.uniform());
    }
    const auto r = composite(samples_from(ts, ds), outputs_from(sigma, vals), Channel::kColor);
    const auto ref = ref_composite(sigma, ts, ds, vals, 3);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(r.value[c] - ref.value[c]) < 1e-10);
    CHECK(std::abs(r.depth - ref.depth) < 1e-10);
    CHECK(std::abs(r.accumulation - ref.acc) < 1e-10);
    double wsum = 0.0;
    for (double w : r.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      wsum += w;
    }
    CHECK(std::abs(wsum + r.transmittance - 1.0) < 1e-12);
    for (int i = 1; i < n; ++i) CHECK(r.transmittances[i] <= r.transmittances[i - 1]);
    CHECK(r.accumulation >= 0.0);
    CHECK(r.accumulation <= 1.0);

    // The modality channel reuses the same weights.
    const auto m = composite(samples_from(ts, ds), outputs_from(sigma, vals), Channel::kModality);
    CHECK(m.weights == r.weights);
  }
}

TEST_CASE("compositor backward matches finite differences") {
  Rng rng(22);
  const int n = 12, stride = 4, ch = 3;
  std::vector<double> sigma(n), ds(n), ts(n), vals(n * stride);
  double t = 0.0;
  for (int i = 0; i < n; ++i) {
    sigma[i] = rng.uniform(0, 5);
    ds[i] = rng.uniform(0.02, 0.1);
    ts[i] = t;
    t += ds[i];
  }
  for (double& v : vals) v = rng.uniform();
  const double dv[3] = {0.3, -0.7, 0.5};
  const double dacc = 0.2, ddepth = -0.4;
  auto loss = [&](const std::vector<double>& s, const std::vector<double>& v) {
    const auto o = composite_strided<double>(n, s.data(), ds.data(), ts.data(), v.data(), stride, 1, ch);
    return dv[0] * o.value[0] + dv[1] * o.value[1] + dv[2] * o.value[2] + dacc * o.accumulation + ddepth * o.depth;
  };
  std::vector<double> g_sigma(n, 0.0), g_vals(n * stride, 0.0);
  composite_strided_backward<double>(n, sigma.data(), ds.data(), ts.data(), vals.data(), stride, 1, ch, dv, dacc,
                                     ddepth, g_sigma.data(), g_vals.data());
  for (int i = 0; i < n; ++i) {
    auto sp = sigma, sm = sigma;
    sp[i] += 1e-6;
    sm[i] -= 1e-6;
    CHECK(g_sigma[i] == doctest::Approx((loss(sp, vals) - loss(sm, vals)) / 2e-6).epsilon(1e-6));
    for (int c = 0; c < stride; ++c) {
      auto vp = vals, vm = vals;
      vp[i * stride + c] += 1e-6;
      vm[i * stride + c] -= 1e-6;
      const double fd = (loss(sigma, vp) - loss(sigma, vm)) / 2e-6;
      CHECK(g_vals[i * stride + c] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("render_image equals a per-pixel loop of sample_ray and composite") {
  const auto model = init_model<double>(mmnerf::testing::tiny_config(), Strategy::kRGBX, ModelRole::kJoint, 3);
  auto m = model;
  Rng rng(23);
  for (size_t i = m.hash_offset; i < m.hash_offset + m.hash_size; ++i) m.params[i] = rng.uniform(-1, 1);
  const Camera cam = small_camera(8, 8);
  RenderOptions opt;
  opt.samples_per_ray = 24;
  opt.chunk_rays = 5;
  const RenderedImages img = render_image(m, cam, opt);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const Ray r = pixel_to_ray(cam, x, y);
      if (!r.hits()) {
        CHECK(img.accumulation.at(x, y) == 0.0f);
        continue;
      }
      const auto s = sample_ray(r, 24, SamplingMode::kUniform);
      std::vector<FieldOutput> outs;
      for (size_t i = 0; i < s.size(); ++i) {
        Vec3 p = s.positions[i].cwiseMax(0.0).cwiseMin(1.0);
        outs.push_back(field_forward(m, p, r.direction, FieldQuery::kBoth));
      }
      const auto c = composite(s, outs, Channel::kColor);
      const auto t = composite(s, outs, Channel::kModality);
      for (int k = 0; k < 3; ++k) CHECK(img.color.at(x, y, k) == doctest::Approx(c.value[k]).epsilon(1e-6));
      CHECK(img.modality.at(x, y) == doctest::Approx(t.value[0]).epsilon(1e-6));
      CHECK(img.depth.at(x, y) == doctest::Approx(c.depth).epsilon(1e-6));
      CHECK(img.accumulation.at(x, y) == doctest::Approx(c.accumulation).epsilon(1e-6));
    }
  }
  const RenderedImages again = render_image(m, cam, opt);
  CHECK(again.color.data == img.color.data);
  CHECK(again.depth.data == img.depth.data);
}

TEST_CASE("an empty model renders (almost) no accumulation") {
  // Density is exp(logit) with the logit clamped at -15, so "empty" means
  // sigma = exp(-15) at worst.
  auto m = make_model<float>(ModelConfig{}, Strategy::kTS, ModelRole::kRgb);
  const auto& b = m.density.bias_offsets.back();
  m.params[b] = -40.0f;
  const RenderedImages img = render_image(m, small_camera(8, 8), RenderOptions{});
  for (float a : img.accumulation.data) CHECK(a < 1e-5f);
  CHECK(img.modality.empty());
}
