// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace mmnerf {

/// How the second modality is fused into the radiance field.
enum class Strategy {
  kTS,    // separate models trained from scratch per modality
  kFT,    // RGB pre-training, then fine-tuning on the second modality
  kRGBX,  // single model, color head widened to RGB + modality
  kSC,    // single model, separate modality head, no gradient into density
};

enum class Modality { kThermal, kNir, kDepth };

/// What a trained model renders. TS and FT yield one model per role.
enum class ModelRole { kRgb, kModality, kJoint };

Strategy parse_strategy(std::string_view s);
std::string to_string(Strategy s);

Modality parse_modality(std::string_view s);
std::string to_string(Modality m);

ModelRole parse_role(std::string_view s);
std::string to_string(ModelRole r);

}  // namespace mmnerf
