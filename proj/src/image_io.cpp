// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mmnerf/error.hpp"

namespace mmnerf {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

Image extract_channel(const Image& img, int channel) {
  if (channel < 0 || channel >= img.channels) throw DimensionError("channel out of range");
  Image out(img.width, img.height, 1);
  for (size_t i = 0; i < img.pixel_count(); ++i) out.data[i] = img.data[i * img.channels + channel];
  return out;
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngReadBuffer {
  const std::string* bytes;
  size_t pos;
};

void png_read_from_buffer(png_structp png, png_bytep out, png_size_t count) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + count > buf->bytes->size()) {
    png_error(png, "truncated PNG");
  }
  std::memcpy(out, buf->bytes->data() + buf->pos, count);
  buf->pos += count;
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), count);
}

void png_flush_noop(png_structp) {}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

namespace {

// libpng reports errors through longjmp. Everything that owns memory is created
// before setjmp and only plain data is touched between setjmp and the calls.
struct PngDecoded {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> raw;
  std::vector<png_bytep> rows;
  char error[256] = {};
};

void png_error_to_buffer(png_structp png, png_const_charp msg) {
  auto* dec = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(dec, 256, "%s", msg);
  png_longjmp(png, 1);
}

bool decode_png(const std::string& bytes, PngDecoded& dec) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, dec.error, png_error_to_buffer, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  PngReadBuffer buf{&bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &buf, png_read_from_buffer);
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  dec.width = static_cast<int>(png_get_image_width(png, info));
  dec.height = static_cast<int>(png_get_image_height(png, info));
  dec.channels = png_get_channels(png, info);
  if (dec.raw.size() < static_cast<size_t>(dec.width) * dec.height * dec.channels ||
      dec.rows.size() < static_cast<size_t>(dec.height)) {
    // Buffers are sized by the caller after a header-only pass.
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
  }
  for (int y = 0; y < dec.height; ++y) dec.rows[y] = dec.raw.data() + static_cast<size_t>(y) * dec.width * dec.channels;
  png_read_image(png, dec.rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png(const std::vector<uint8_t>& raw, int w, int h, int c, std::string& out,
                std::vector<png_const_bytep>& rows, char* error) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, error, png_error_to_buffer, png_warn);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, w, h, 8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * w * c;
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image read_png(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }
  PngDecoded dec;
  if (!decode_png(bytes, dec)) throw FormatError("PNG " + path.string() + ": " + dec.error);
  dec.raw.resize(static_cast<size_t>(dec.width) * dec.height * dec.channels);
  dec.rows.resize(dec.height);
  if (!decode_png(bytes, dec)) throw FormatError("PNG " + path.string() + ": " + dec.error);

  Image img(dec.width, dec.height, dec.channels);
  for (size_t i = 0; i < dec.raw.size(); ++i) img.data[i] = static_cast<float>(dec.raw[i]) / 255.0f;
  return img;
}

void write_png(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DimensionError("PNG writer supports 1 or 3 channels");
  std::vector<uint8_t> raw(img.data.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.0f, 1.0f);
    raw[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  std::string out;
  std::vector<png_const_bytep> rows(img.height);
  char error[256] = {};
  if (!encode_png(raw, img.width, img.height, img.channels, out, rows, error)) {
    throw FormatError(std::string("PNG encode: ") + error);
  }
  atomic_write(path, out);
}

Image read_mask_png(const fs::path& path) {
  const Image img = read_png(path);
  Image mask(img.width, img.height, 1);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    // 8-bit value >= 128
    const float v = img.data[i * img.channels];
    mask.data[i] = std::lround(v * 255.0f) >= 128 ? 1.0f : 0.0f;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// PFM

Image read_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream header(bytes);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  header >> magic >> w >> h >> scale;
  if (!header || (magic != "Pf" && magic != "PF")) throw FormatError("bad PFM header: " + path.string());
  if (w <= 0 || h <= 0) throw FormatError("bad PFM dimensions: " + path.string());
  header.get();  // single whitespace before the raster
  const size_t offset = static_cast<size_t>(header.tellg());
  const int c = magic == "PF" ? 3 : 1;
  const size_t count = static_cast<size_t>(w) * h * c;
  if (bytes.size() < offset + count * 4) throw FormatError("truncated PFM: " + path.string());

  const bool file_little = scale < 0.0;
  const bool host_little = std::endian::native == std::endian::little;
  Image img(w, h, c);
  for (int y = 0; y < h; ++y) {
    const int src_row = h - 1 - y;  // bottom-to-top on disk
    for (int i = 0; i < w * c; ++i) {
      uint32_t word;
      std::memcpy(&word, bytes.data() + offset + (static_cast<size_t>(src_row) * w * c + i) * 4, 4);
      if (file_little != host_little) word = __builtin_bswap32(word);
      float v;
      std::memcpy(&v, &word, 4);
      img.data[static_cast<size_t>(y) * w * c + i] = v;
    }
  }
  return img;
}

void write_pfm(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DimensionError("PFM writer supports 1 or 3 channels");
  std::string out = (img.channels == 3 ? "PF\n" : "Pf\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n-1.0\n";
  const size_t row = static_cast<size_t>(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y) {
    for (size_t i = 0; i < row; ++i) {
      uint32_t word;
      std::memcpy(&word, &img.data[y * row + i], 4);
      if constexpr (std::endian::native != std::endian::little) word = __builtin_bswap32(word);
      out.append(reinterpret_cast<const char*>(&word), 4);
    }
  }
  atomic_write(path, out);
}

Image read_image(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".png") return read_png(path);
  if (ext == ".pfm") return read_pfm(path);
  throw FormatError("unsupported image extension: " + path.string());
}

}  // namespace mmnerf
