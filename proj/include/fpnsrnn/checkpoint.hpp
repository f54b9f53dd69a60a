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

#include <filesystem>
#include <string>
#include <vector>

#include "fpnsrnn/autograd.hpp"
#include "fpnsrnn/config.hpp"

namespace fpnsrnn {

// Checkpoint directory: one tensor archive per parameter, `manifest.txt`
// (`name = file n c h w` lines plus the scan direction order) and
// `model.cfg` holding the architecture keys.
void save_checkpoint(const std::filesystem::path& dir, const ParamSet<float>& params, const RunConfig& cfg);

/// Loads parameters and applies the stored architecture keys onto `cfg`.
/// Throws IoError for unreadable files, DataError for a malformed manifest.
ParamSet<float> load_checkpoint(const std::filesystem::path& dir, RunConfig& cfg);

/// Writes `<dir>/manifest.txt` listing each output file with its size and
/// FNV-1a digest, plus the full configuration.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command,
                        const std::vector<std::filesystem::path>& outputs, const RunConfig& cfg);

}  // namespace fpnsrnn
