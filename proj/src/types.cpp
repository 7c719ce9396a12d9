// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmnerf/types.hpp"

#include <cctype>

#include "mmnerf/error.hpp"

namespace mmnerf {

namespace {

/// Lower case with '-' and '_' removed, so "RGB-X" reads as "rgbx".
std::string canonical(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '-' && c != '_') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

Strategy parse_strategy(std::string_view name) {
  const std::string s = canonical(name);
  if (s == "ts") return Strategy::kTS;
  if (s == "ft") return Strategy::kFT;
  if (s == "rgbx") return Strategy::kRGBX;
  if (s == "sc") return Strategy::kSC;
  throw DomainError("unknown strategy '" + std::string(name) + "' (expected ts, ft, rgbx, sc)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kTS: return "ts";
    case Strategy::kFT: return "ft";
    case Strategy::kRGBX: return "rgbx";
    case Strategy::kSC: return "sc";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  const std::string s = canonical(name);
  if (s == "thermal") return Modality::kThermal;
  if (s == "nir") return Modality::kNir;
  if (s == "depth") return Modality::kDepth;
  throw DomainError("unknown modality '" + std::string(name) + "' (expected thermal, nir, depth)");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::kThermal: return "thermal";
    case Modality::kNir: return "nir";
    case Modality::kDepth: return "depth";
  }
  return "?";
}

ModelRole parse_role(std::string_view s) {
  if (s == "rgb") return ModelRole::kRgb;
  if (s == "modality") return ModelRole::kModality;
  if (s == "joint") return ModelRole::kJoint;
  throw DomainError("unknown model role '" + std::string(s) + "'");
}

std::string to_string(ModelRole r) {
  switch (r) {
    case ModelRole::kRgb: return "rgb";
    case ModelRole::kModality: return "modality";
    case ModelRole::kJoint: return "joint";
  }
  return "?";
}

}  // namespace mmnerf
