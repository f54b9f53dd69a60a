// Copyright 2026 The fpnsrnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "fpnsrnn/autograd.hpp"
#include "fpnsrnn/rng.hpp"
#include "fpnsrnn/srnn.hpp"

namespace fpnsrnn {

inline constexpr std::size_t kLevels = 4;
inline constexpr std::array<int, kLevels> kLevelStrides{4, 8, 16, 32};

struct BackboneConfig {
  std::size_t in_channels = 1;
  std::size_t stem_width = 8;
  std::array<std::size_t, kLevels> widths{16, 32, 64, 128};
};

struct ExtractorConfig {
  BackboneConfig backbone;
  std::size_t pyramid_width = 64;
  bool srnn_enabled = true;
  int srnn_rounds = 2;
};

/// Four levels, finest first, all with pyramid_width channels.
struct FeaturePyramid {
  std::array<int, kLevels> strides = kLevelStrides;
  std::array<Tensor<float>, kLevels> levels;
};

using LevelVars = std::array<Var, kLevels>;

void init_extractor(ParamSet<float>& params, const ExtractorConfig& cfg, Rng& rng);

/// Throws ShapeError unless the image height and width are multiples of 32.
void require_padded(const Shape& image);

// Stem: 3x3 conv, ReLU, 2x2 max-pool. Each stage: stride-2 3x3 conv with ReLU,
// then relu(x + conv3x3(relu(conv3x3(x)))).
template <typename T>
LevelVars backbone_forward(ParamBinder<T>& p, Var image, const BackboneConfig& cfg);

/// Top-down merge: top = lateral(stage 4), level k = lateral(stage k) + 2x(level k + 1).
template <typename T>
LevelVars build_pyramid(ParamBinder<T>& p, const LevelVars& stages);

/// compress(l2norm_scale(concat(semantic, context))); an invalid context Var
/// normalizes and compresses the semantic map alone.
template <typename T>
Var fuse_context(ParamBinder<T>& p, std::size_t level, Var semantic, Var context);

template <typename T>
LevelVars extract(ParamBinder<T>& p, Var image, const ExtractorConfig& cfg);

FeaturePyramid extract_pyramid(const ParamSet<float>& params, const Tensor<float>& image, const ExtractorConfig& cfg);

std::string lateral_name(std::size_t level);
std::string srnn_prefix(std::size_t level);
std::string gamma_name(std::size_t level);
std::string compress_name(std::size_t level);

}  // namespace fpnsrnn
