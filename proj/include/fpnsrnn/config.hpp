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
#include <stdexcept>
#include <string>
#include <vector>

#include "fpnsrnn/data.hpp"
#include "fpnsrnn/model.hpp"
#include "fpnsrnn/train.hpp"

namespace fpnsrnn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every tunable of a run. Text form is flat `key=value` lines.
struct RunConfig {
  std::uint64_t seed = 42;
  int threads = 1;
  ModelConfig model;
  TrainOptions train;
  std::size_t batch_size = 1;
  AbsentClassPolicy absent_class_policy = AbsentClassPolicy::Zero;

  std::string dataset;
  std::string run_dir = "run";
  std::string checkpoint;
  std::string image;
  std::string mask;
  std::string output;
  double alpha = 0.4;
  std::size_t count = 8;
  std::size_t image_size = 64;

  std::string ops;
  std::size_t trials = 10;
  bool checked = false;
};

/// Names accepted by apply_setting, in documentation order.
const std::vector<std::string>& config_keys();
/// Keys that fix the network architecture (stored with checkpoints).
const std::vector<std::string>& model_keys();

/// Throws ConfigError for unknown keys or unparsable values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_setting(const RunConfig& cfg, const std::string& key);
/// `key=value` lines; blank lines and '#' comments ignored.
void apply_config_text(RunConfig& cfg, const std::string& text);
std::string format_config(const RunConfig& cfg, const std::vector<std::string>& keys);

/// Range checks; throws ConfigError.
void validate(const RunConfig& cfg);

}  // namespace fpnsrnn
