// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "doctest.h"
#include "mmnerf/error.hpp"
#include "mmnerf/metrics.hpp"
#include "mmnerf/synth.hpp"
#include "test_support.hpp"

using namespace mmnerf;
using mmnerf::testing::random_image;

namespace {

/// Reference SSIM: explicit 2-D kernel as an outer product and matrix-valued
/// window statistics.
double reference_ssim(const Image& a, const Image& b, const Image* mask, const SsimConfig& cfg = {}) {
  const int w = cfg.window, r = w / 2;
  Eigen::VectorXd g(w);
  for (int i = 0; i < w; ++i) g[i] = std::exp(-0.5 * std::pow((i - r) / cfg.sigma, 2));
  Eigen::MatrixXd k = g * g.transpose();
  k /= k.sum();
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2), c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  double total = 0.0;
  int count = 0;
  for (int cy = r; cy + r < a.height; ++cy)
    for (int cx = r; cx + r < a.width; ++cx) {
      if (mask && mask->at(cx, cy) <= 0.5f) continue;
      double acc = 0.0;
      for (int c = 0; c < a.channels; ++c) {
        Eigen::MatrixXd X(w, w), Y(w, w);
        for (int dy = 0; dy < w; ++dy)
          for (int dx = 0; dx < w; ++dx) {
            X(dy, dx) = a.at(cx - r + dx, cy - r + dy, c);
            Y(dy, dx) = b.at(cx - r + dx, cy - r + dy, c);
          }
        const double mx = (k.array() * X.array()).sum(), my = (k.array() * Y.array()).sum();
        const double vx = (k.array() * (X.array() - mx).square()).sum();
        const double vy = (k.array() * (Y.array() - my).square()).sum();
        const double cov = (k.array() * (X.array() - mx) * (Y.array() - my)).sum();
        acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
      total += acc / a.channels;
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("MSE and PSNR examples") {
  Image a(2, 2, 1, 0.0f), b(2, 2, 1, 0.0f);
  CHECK(psnr(a, b) == kPsnrCap);
  b.data = {0.1f, 0.1f, 0.1f, 0.1f};
  CHECK(masked_mse(a, b) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  Image m(2, 2, 1, 0.0f);
  m.at(0, 0) = 1.0f;
  b.at(1, 1) = 0.9f;
  CHECK(masked_mse(a, b, &m) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK_THROWS_AS(masked_mse(a, b, &(m = Image(2, 2, 1, 0.0f))), DomainError);
  CHECK_THROWS_AS(masked_mse(a, Image(3, 2, 1)), DimensionError);
}

TEST_CASE("PSNR is monotone in the error scale") {
  Rng rng(1);
  const Image gt = random_image(rng, 16, 16, 3);
  const Image noise = random_image(rng, 16, 16, 3, -0.1, 0.1);
  double prev = kPsnrCap + 1;
  for (double s : {0.01, 0.1, 0.5, 1.0}) {
    Image p = gt;
    for (size_t i = 0; i < p.data.size(); ++i) p.data[i] += static_cast<float>(s * noise.data[i]);
    const double v = psnr(p, gt);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("SSIM matches an independent reference") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Image a = random_image(rng, 19, 17, 3);
    Image b = a;
    for (float& v : b.data) v = std::clamp(v + static_cast<float>(rng.normal(0, 0.1)), 0.0f, 1.0f);
    CHECK(ssim(a, b) == doctest::Approx(reference_ssim(a, b, nullptr)).epsilon(1e-9));
    Image mask(19, 17, 1, 0.0f);
    for (int y = 4; y < 12; ++y)
      for (int x = 3; x < 14; ++x) mask.at(x, y) = 1.0f;
    CHECK(ssim(a, b, &mask) == doctest::Approx(reference_ssim(a, b, &mask)).epsilon(1e-9));
  }
}

TEST_CASE("SSIM of constant images has the closed form") {
  const double c1 = 1e-4;
  for (auto [x, y] : {std::pair{0.2, 0.2}, std::pair{0.3, 0.6}, std::pair{0.0, 1.0}}) {
    const Image a(12, 12, 1, static_cast<float>(x)), b(12, 12, 1, static_cast<float>(y));
    const double xf = static_cast<float>(x), yf = static_cast<float>(y);
    CHECK(ssim(a, b) == doctest::Approx((2 * xf * yf + c1) / (xf * xf + yf * yf + c1)).epsilon(1e-6));
  }
}

TEST_CASE("SSIM properties") {
  Rng rng(3);
  const Image a = random_image(rng, 14, 14, 1);
  const Image b = random_image(rng, 14, 14, 1);
  CHECK(ssim(a, a) == doctest::Approx(1.0));
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  CHECK(ssim(a, b) <= 1.0);
  const Image full(14, 14, 1, 1.0f);
  CHECK(ssim(a, b, &full) == doctest::Approx(ssim(a, b)).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(Image(8, 20, 1), Image(8, 20, 1)), DimensionError);
  const Image none(14, 14, 1, 0.0f);
  CHECK_THROWS_AS(ssim(a, b, &none), DomainError);
}

TEST_CASE("held-out indices are evenly spaced") {
  CHECK(held_out_indices(30, 10) == std::vector<size_t>{1, 4, 7, 10, 13, 16, 19, 22, 25, 28});
  CHECK(held_out_indices(12, 4) == std::vector<size_t>{1, 4, 7, 10});
  CHECK(held_out_indices(5, 1) == std::vector<size_t>{2});
  CHECK_THROWS_AS(held_out_indices(4, 4), DomainError);
  CHECK_THROWS_AS(held_out_indices(4, 0), DomainError);
}

TEST_CASE("leave-one-out on a small scene") {
  SynthOptions o;
  o.n_views = 5;
  o.width = o.height = 16;
  o.quadrature_n = 128;
  const SceneDataset ds = make_dataset(default_scene(), o);
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.batch_rays = 32;
  cfg.samples_per_ray = 8;
  cfg.deterministic = true;
  cfg.model = mmnerf::testing::tiny_config();
  EvalOptions eo;
  eo.render.samples_per_ray = 8;
  const EvalReport rep = leave_one_out(ds, Strategy::kTS, cfg, 2, eo);
  REQUIRE(rep.folds.size() == 2);
  CHECK(rep.folds[0].held_out == 1);
  CHECK(rep.folds[1].held_out == 3);
  CHECK(rep.mean.rgb_psnr == doctest::Approx((rep.folds[0].metrics.rgb_psnr + rep.folds[1].metrics.rgb_psnr) / 2));
  const std::string csv = report_csv(rep);
  CHECK(csv.rfind("scene,strategy,fold,held_out,rgb_psnr,rgb_ssim,modality_psnr,modality_ssim\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(report_json(rep).find("\"folds\"") != std::string::npos);
  CHECK_THROWS_AS(leave_one_out(ds, Strategy::kTS, cfg, 5, eo), DomainError);
}
