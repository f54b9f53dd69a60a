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

#include "fpnsrnn/data.hpp"
#include "fpnsrnn/model.hpp"

namespace fpnsrnn {

struct ImageEval {
  std::string name;
  DiceReport report;
};

struct EvalSummary {
  std::vector<ImageEval> images;
  AbsentClassPolicy policy = AbsentClassPolicy::Zero;
  /// Per-organ mean over images (under Skip, over images where it appears).
  std::array<double, kNumClasses> class_mean{};
  /// Mean of the per-image means.
  double mean = 0.0;
  /// Dice from counts summed over every image.
  std::array<double, kNumClasses> pooled{};
  double pooled_mean = 0.0;
  std::size_t skipped = 0;
};

/// Aggregates per-image reports; `skipped` counts images left out upstream.
EvalSummary summarize(std::vector<ImageEval> images, AbsentClassPolicy policy, std::size_t skipped = 0);

/// Predicts every sample and scores it against its mask.
EvalSummary evaluate(const ParamSet<float>& params, const std::vector<Sample>& samples, const ModelConfig& cfg,
                     AbsentClassPolicy policy);

/// `image,<organ names...>,mean` rows, then `mean` and `pooled` rows.
std::string eval_csv(const EvalSummary& s);

}  // namespace fpnsrnn
