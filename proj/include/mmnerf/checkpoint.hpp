// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mmnerf/field.hpp"

namespace mmnerf {

template <typename T>
struct OptimizerState {
  std::vector<T> m;
  std::vector<T> v;
  uint64_t step = 0;
};

struct ModelCheckpoint {
  FieldModel<float> model;
  OptimizerState<float> optimizer;  // empty moments when not saved
  uint64_t iteration = 0;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian):
///   "MMNF" | u32 version | u32 strategy | u32 role | u32 len | config JSON
///   | u64 iteration | u64 param count | f32 params[]
///   | u8 has optimizer | (u64 step | f32 m[] | f32 v[])
///   | u32 len | segment table JSON
std::string encode_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmnerf
