// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mmnerf/calibration.hpp"
#include "mmnerf/checkpoint.hpp"
#include "mmnerf/image.hpp"
#include "test_support.hpp"

using namespace mmnerf;
using mmnerf::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status = -1;
  std::string output;
};

RunResult run(const std::string& args, const TempDir& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = std::string(MMNERF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = read_file(log);
  return r;
}

std::string synth_scene(const TempDir& dir, const std::string& name, int views, const std::string& extra = "") {
  const fs::path out = dir / name;
  const auto r = run("synth --views " + std::to_string(views) + " --width 16 --height 16 --quadrature 64 --out " +
                         out.string() + " " + extra,
                     dir);
  REQUIRE(r.status == 0);
  return (out / "manifest.json").string();
}

const std::string kQuickTrain = " --iterations 12 --batch-rays 64 --samples 8 --log-every 4 --deterministic";

}  // namespace

TEST_CASE("missing required options and bad values exit non-zero") {
  TempDir dir;
  CHECK(run("synth --views 3", dir).status != 0);
  CHECK(run("train --scene nowhere.json", dir).status != 0);
  const auto r = run("train --scene " + (dir / "nowhere.json").string() + " --out " + (dir / "o").string(), dir);
  CHECK(r.status != 0);
  CHECK(r.output.find("error:") != std::string::npos);
  CHECK(run("frobnicate", dir).status != 0);
}

TEST_CASE("synth output is deterministic") {
  TempDir dir;
  const auto a = synth_scene(dir, "a", 3, "--noise 0.01 --seed 2");
  const auto b = synth_scene(dir, "b", 3, "--noise 0.01 --seed 2");
  for (const std::string f : {"rgb/001.png", "thermal/002.pfm", "mask/000.png"}) {
    CHECK(read_file(fs::path(a).parent_path() / f) == read_file(fs::path(b).parent_path() / f));
  }
}

TEST_CASE("calibrate from CSV and from images") {
  TempDir dir;
  Homography truth;
  truth.H << 1.02, 0.01, 2.0, -0.02, 0.98, 1.5, 0.0, 0.0, 1.0;
  {
    std::ofstream f(dir / "pairs.csv");
    f << "x,y,x2,y2\n";
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        const Vec2 s(10 + 20 * x, 8 + 20 * y);
        const Vec2 d = truth.apply(s);
        f << s.x() << "," << s.y() << "," << d.x() << "," << d.y() << "\n";
      }
  }
  REQUIRE(run("calibrate --csv " + (dir / "pairs.csv").string() + " --out " + (dir / "h.json").string(), dir).status ==
          0);
  const Homography h = read_homography_json(dir / "h.json");
  CHECK((h.H - truth.H).cwiseAbs().maxCoeff() < 1e-4);

  // Dot grids as images.
  auto dots = [&](bool warped) {
    Image img(80, 70, 1);
    for (int gy = 0; gy < 4; ++gy)
      for (int gx = 0; gx < 5; ++gx) {
        Vec2 c(10 + 14 * gx, 10 + 14 * gy);
        if (warped) c = truth.apply(c);
        for (int y = 0; y < 70; ++y)
          for (int x = 0; x < 80; ++x) {
            const double r = (Vec2(x, y) - c).norm();
            if (r < 3.0) img.at(x, y) = std::max(img.at(x, y), static_cast<float>(std::min(1.0, 3.0 - r)));
          }
      }
    return img;
  };
  write_png(dir / "rgb.png", dots(false));
  write_png(dir / "mod.png", dots(true));
  const auto r = run("calibrate --rgb-image " + (dir / "rgb.png").string() + " --modality-image " +
                         (dir / "mod.png").string() + " --out " + (dir / "h2.json").string(),
                     dir);
  REQUIRE(r.status == 0);
  const Homography h2 = read_homography_json(dir / "h2.json");
  CHECK((h2.apply(Vec2(40, 30)) - truth.apply(Vec2(40, 30))).norm() < 0.2);

  {
    std::ofstream f(dir / "few.csv");
    f << "0,0,1,1\n1,0,2,1\n0,1,1,2\n";
  }
  const auto few = run("calibrate --csv " + (dir / "few.csv").string() + " --out " + (dir / "h3.json").string(), dir);
  CHECK(few.status != 0);
  CHECK_FALSE(fs::exists(dir / "h3.json"));
}

TEST_CASE("train writes checkpoints and a log for each strategy") {
  TempDir dir;
  const auto scene = synth_scene(dir, "s", 4);
  const std::pair<const char*, int> cases[] = {{"ts", 2}, {"ft", 2}, {"rgbx", 1}, {"sc", 1}};
  for (auto [strategy, count] : cases) {
    const fs::path out = dir / strategy;
    const auto r = run("train --scene " + scene + " --strategy " + strategy + kQuickTrain + " --out " + out.string(),
                       dir);
    INFO(r.output);
    REQUIRE(r.status == 0);
    int ckpts = 0;
    for (const auto& e : fs::directory_iterator(out)) ckpts += e.path().extension() == ".ckpt";
    CHECK(ckpts == count);
    CHECK(read_file(out / "train_log.csv").rfind("iteration,phase", 0) == 0);
  }
  CHECK(load_checkpoint(dir / "ft" / "ft_finetune.ckpt").model.role == ModelRole::kModality);
  CHECK(run("train --scene " + scene + " --modality depth --out " + (dir / "x").string(), dir).status != 0);
}

TEST_CASE("deterministic training from the CLI is reproducible") {
  TempDir dir;
  const auto scene = synth_scene(dir, "s", 4);
  for (const char* o : {"r1", "r2"}) {
    REQUIRE(run("train --scene " + scene + " --strategy sc" + kQuickTrain + " --out " + (dir / o).string(), dir)
                .status == 0);
  }
  CHECK(read_file(dir / "r1" / "sc.ckpt") == read_file(dir / "r2" / "sc.ckpt"));
}

TEST_CASE("render writes every output image") {
  TempDir dir;
  const auto scene = synth_scene(dir, "s", 3);
  REQUIRE(run("train --scene " + scene + " --strategy ts" + kQuickTrain + " --out " + (dir / "t").string(), dir)
              .status == 0);
  const auto r = run("render --checkpoint " + (dir / "t" / "ts_rgb.ckpt").string() + " " +
                         (dir / "t" / "ts_modality.ckpt").string() + " --scene " + scene +
                         " --view 1 --samples 8 --out " + (dir / "img").string(),
                     dir);
  INFO(r.output);
  REQUIRE(r.status == 0);
  for (const char* f : {"view_001_color.png", "view_001_modality.pfm", "view_001_modality.png", "view_001_depth.pfm",
                        "view_001_depth.png", "view_001_accumulation.png"}) {
    CHECK(fs::exists(dir / "img" / f));
  }
  const Image c = read_png(dir / "img" / "view_001_color.png");
  CHECK(c.width == 16);
  CHECK(c.channels == 3);
}

TEST_CASE("eval produces one row per fold") {
  TempDir dir;
  const auto scene = synth_scene(dir, "s", 12);
  const auto r = run("eval --scene " + scene + " --strategy rgbx --folds 4 --eval-samples 8" + kQuickTrain +
                         " --out " + (dir / "e").string(),
                     dir);
  INFO(r.output);
  REQUIRE(r.status == 0);
  const std::string csv = read_file(dir / "e" / "report.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(fs::exists(dir / "e" / "report.json"));
  CHECK(run("eval --scene " + scene + " --folds 12" + kQuickTrain + " --out " + (dir / "f").string(), dir).status !=
        0);
}
