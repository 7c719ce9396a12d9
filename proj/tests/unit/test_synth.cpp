// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "mmnerf/renderer.hpp"
#include "mmnerf/synth.hpp"
#include "test_support.hpp"

using namespace mmnerf;

namespace {

AnalyticScene one_blob() {
  AnalyticScene s;
  s.blobs.push_back({Vec3(0.5, 0.5, 0.5), 0.2, 30.0, {0.9, 0.2, 0.1}, 37.0});
  s.background_modality = 20.0;
  return s;
}

double azimuth(const Camera& c) {
  const Vec3 d = c.origin() - Vec3::Constant(0.5);
  return std::atan2(d.y(), d.x());
}

}  // namespace

TEST_CASE("analytic field examples") {
  const AnalyticScene s = one_blob();
  const auto c = analytic_field(s, Vec3(0.5, 0.5, 0.5));
  CHECK(c.sigma == doctest::Approx(30.0));
  CHECK(c.color[0] == doctest::Approx(0.9));
  CHECK(c.modality == doctest::Approx(37.0));
  const auto e = analytic_field(s, Vec3(0.7, 0.5, 0.5));
  CHECK(e.sigma == doctest::Approx(30.0 * std::exp(-1.0)));

  AnalyticScene two;
  two.blobs = {{Vec3(0.3, 0.5, 0.5), 0.1, 10.0, {1, 0, 0}, 10.0}, {Vec3(0.7, 0.5, 0.5), 0.1, 10.0, {0, 0, 1}, 30.0}};
  const auto mid = analytic_field(two, Vec3(0.5, 0.5, 0.5));
  CHECK(mid.color[0] == doctest::Approx(0.5));
  CHECK(mid.color[2] == doctest::Approx(0.5));
  CHECK(mid.modality == doctest::Approx(20.0));
  CHECK(analytic_field(AnalyticScene{}, Vec3(0.5, 0.5, 0.5)).sigma == 0.0);
}

TEST_CASE("oracle compositing agrees with the renderer's compositor") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 40);
    std::vector<double> sigma(n), ts(n), deltas(n), values(3 * n);
    double t = rng.uniform(0.0, 0.5);
    for (int i = 0; i < n; ++i) {
      sigma[i] = rng.uniform(0.0, 20.0);
      deltas[i] = rng.uniform(0.001, 0.1);
      ts[i] = t;
      t += deltas[i];
      for (int c = 0; c < 3; ++c) values[3 * i + c] = rng.uniform();
    }
    const auto o = oracle_composite(sigma, ts, deltas, values, 3);
    const auto r = composite_strided<double>(n, sigma.data(), deltas.data(), ts.data(), values.data(), 3, 0, 3);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(o.value[c] - r.value[c]) < 1e-10);
    CHECK(std::abs(o.depth - r.depth) < 1e-10);
    CHECK(std::abs(o.transmittance - r.transmittance) < 1e-10);
    CHECK(o.accumulation + o.transmittance == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("oracle quadrature converges") {
  const AnalyticScene s = default_scene();
  SynthOptions opt;
  opt.n_views = 4;
  opt.width = opt.height = 16;
  const auto cams = make_cameras(opt);
  double worst = 0.0;
  for (const auto& cam : cams)
    for (int y = 0; y < 16; y += 3)
      for (int x = 0; x < 16; x += 3) {
        const Ray ray = pixel_to_ray(cam, x, y);
        const auto a = oracle_ray(s, ray, 1024);
        const auto b = oracle_ray(s, ray, 2048);
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a.color[c] - b.color[c]));
        worst = std::max(worst, std::abs(a.modality - b.modality) / 40.0);
      }
  CHECK(worst < 1e-3);
}

TEST_CASE("oracle ray through a single blob") {
  const AnalyticScene s = one_blob();
  Ray ray;
  ray.origin = Vec3(0.5, 0.5, 2.0);
  ray.direction = Vec3(0, 0, -1);
  ray.t_near = 1.0;
  ray.t_far = 2.0;
  const auto o = oracle_ray(s, ray, 4096);
  // Optical depth of a Gaussian along its center line, truncated to the cube.
  const double tau = 30.0 * 0.2 * std::sqrt(std::numbers::pi) * std::erf(0.5 / 0.2);
  CHECK(o.transmittance == doctest::Approx(std::exp(-tau)).epsilon(1e-4));
  CHECK(o.color[0] == doctest::Approx(0.9 * (1 - std::exp(-tau))).epsilon(1e-4));
  CHECK(o.modality == doctest::Approx(37.0 * (1 - std::exp(-tau)) + 20.0 * std::exp(-tau)).epsilon(1e-4));
  CHECK(o.depth / o.accumulation < 1.5);

  Ray miss;
  miss.origin = Vec3(3, 3, 3);
  miss.direction = Vec3(0, 0, 1);
  miss.t_near = miss.t_far = 0.0;
  const auto m = oracle_ray(s, miss, 64);
  CHECK(m.accumulation == 0.0);
  CHECK(m.modality == 20.0);
}

TEST_CASE("camera layouts") {
  SynthOptions f;
  f.n_views = 7;
  const auto fw = make_cameras(f);
  REQUIRE(fw.size() == 7);
  CHECK(std::abs(azimuth(fw.back()) - azimuth(fw.front())) == doctest::Approx(std::numbers::pi / 3));
  for (const auto& c : fw) {
    CHECK((c.origin() - Vec3::Constant(0.5)).norm() == doctest::Approx(1.5));
    CHECK(c.fx == doctest::Approx(1.1 * 64));
    // The optical axis passes through the cube center.
    const Vec3 axis = -c.rotation().col(2);
    const Vec3 to_center = (Vec3::Constant(0.5) - c.origin()).normalized();
    CHECK(axis.dot(to_center) == doctest::Approx(1.0));
    const double elev = std::asin((c.origin().z() - 0.5) / 1.5);
    CHECK(elev == doctest::Approx(20.0 * std::numbers::pi / 180.0));
  }
  SynthOptions o;
  o.layout = Layout::kOrbit360;
  o.n_views = 8;
  const auto orb = make_cameras(o);
  for (size_t i = 0; i < 8; ++i) {
    const double step = std::remainder(azimuth(orb[(i + 1) % 8]) - azimuth(orb[i]), 2 * std::numbers::pi);
    CHECK(step == doctest::Approx(std::numbers::pi / 4));
  }
}

TEST_CASE("datasets are deterministic and valid") {
  SynthOptions o;
  o.n_views = 3;
  o.width = o.height = 12;
  o.quadrature_n = 128;
  o.noise_sigma = 0.02;
  o.seed = 4;
  const auto a = make_dataset(default_scene(), o);
  const auto b = make_dataset(default_scene(), o);
  CHECK(a.rgb_images[1].data == b.rgb_images[1].data);
  CHECK(a.modality_images[2].data == b.modality_images[2].data);
  o.seed = 5;
  const auto c = make_dataset(default_scene(), o);
  CHECK(a.rgb_images[1].data != c.rgb_images[1].data);
  validate_dataset(a);
  CHECK(a.has_masks());

  o.noise_sigma = 0.0;
  o.modality = Modality::kDepth;
  o.masks = false;
  const auto d = make_dataset(default_scene(), o);
  CHECK_FALSE(d.has_masks());
  CHECK(d.modality == Modality::kDepth);
  // Raw depth lies between the camera distance to the cube and the far exit.
  for (const auto& img : denormalize_modality(d.modality_images, d.modality_scale))
    for (float v : img.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.5f + std::sqrt(3.0f));
    }
}

TEST_CASE("oracle images match per-ray evaluation") {
  const AnalyticScene s = default_scene();
  SynthOptions o;
  o.n_views = 2;
  o.width = 10;
  o.height = 8;
  const Camera cam = make_cameras(o)[0];
  const auto img = oracle_render(s, cam, 128);
  for (int y = 0; y < 8; y += 3)
    for (int x = 0; x < 10; x += 3) {
      const auto r = oracle_ray(s, pixel_to_ray(cam, x, y), 128);
      CHECK(img.rgb.at(x, y, 1) == static_cast<float>(r.color[1]));
      CHECK(img.modality.at(x, y) == static_cast<float>(r.modality));
      CHECK(img.accumulation.at(x, y) == static_cast<float>(r.accumulation));
    }
}
