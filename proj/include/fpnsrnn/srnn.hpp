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

#include <string>

#include "fpnsrnn/autograd.hpp"
#include "fpnsrnn/rng.hpp"
#include "fpnsrnn/scan.hpp"

namespace fpnsrnn {

struct SrnnConfig {
  int rounds = 2;
  std::size_t c_hid = 0;
  std::size_t c_out = 0;
};

// Parameters of one round live under "<prefix>.r<k>":
//   in.w/in.b     1x1 input projection c_in -> c_hid
//   whh.<dir>     (c_hid, c_hid, 1, 1) recurrent matrix, [out][in]
//   mix.w/mix.b   1x1 projection 4 c_hid -> c_out over the concatenated scans
// Scan outputs are concatenated in the order right, left, down, up.
std::string round_prefix(const std::string& prefix, int round);
std::string whh_name(const std::string& round_prefix, Direction d);

/// Random projections and identity recurrent matrices. Round k > 0 takes the
/// previous round's c_out channels. The last round's mix starts at zero, so a
/// fresh module outputs zero context.
void init_srnn(ParamSet<float>& params, const std::string& prefix, std::size_t c_in, const SrnnConfig& cfg, Rng& rng);

/// One round: project, scan the projected map in all four directions,
/// concatenate, mix.
template <typename T>
Var srnn_round(ParamBinder<T>& p, const std::string& round_prefix, Var x);

template <typename T>
Var srnn_module(ParamBinder<T>& p, const std::string& prefix, Var x, const SrnnConfig& cfg);

}  // namespace fpnsrnn
