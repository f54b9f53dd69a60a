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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fpnsrnn/model.hpp"

namespace fpnsrnn {

struct TrainOptions {
  std::size_t steps = 5000;
  double learning_rate = 0.0025;
  double momentum = 0.9;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 10.0;
  std::uint64_t seed = 42;
};

struct StepLog {
  std::size_t step = 0;
  std::string sample;
  LossBreakdown loss;
  double grad_norm = 0;
};

struct TrainResult {
  ParamSet<float> params;
  std::vector<StepLog> log;
  bool diverged = false;
  /// Last step whose total loss was finite (meaningful when diverged).
  std::size_t last_finite_step = 0;
};

/// SGD with momentum over the samples, one image per step, visiting them in a
/// seeded order reshuffled every epoch.
TrainResult train(ParamSet<float> params, const std::vector<Sample>& samples, const ModelConfig& cfg,
                  const TrainOptions& opts, const std::function<void(const StepLog&)>& on_step = {});

std::string loss_csv_header();
std::string loss_csv_row(const StepLog& s);

}  // namespace fpnsrnn
