// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace mmnerf {

/// Row-major, channel-interleaved float image.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  size_t index(int x, int y, int c = 0) const {
    return (static_cast<size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// Extracts one channel as a single-channel image.
Image extract_channel(const Image& img, int channel);

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA); values are divided by 255.
/// Alpha is dropped.
Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0,1] and rounding.
void write_png(const std::filesystem::path& path, const Image& img);

/// Reads a PFM ("Pf" gray or "PF" color), either byte order. Rows are stored
/// bottom-to-top on disk and returned top-to-bottom.
Image read_pfm(const std::filesystem::path& path);

/// Writes a little-endian PFM (scale -1.0).
void write_pfm(const std::filesystem::path& path, const Image& img);

/// Reads a mask PNG: 1 where the gray value is >= 128, else 0.
Image read_mask_png(const std::filesystem::path& path);

/// Picks the reader from the file extension (.png or .pfm).
Image read_image(const std::filesystem::path& path);

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so a
/// failed write never leaves a partial file behind.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace mmnerf
