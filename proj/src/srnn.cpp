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

#include "fpnsrnn/srnn.hpp"

#include <array>
#include <stdexcept>

#include "fpnsrnn/nn.hpp"
#include "fpnsrnn/ops.hpp"

namespace fpnsrnn {

std::string round_prefix(const std::string& prefix, int round) { return prefix + ".r" + std::to_string(round); }

std::string whh_name(const std::string& round_prefix, Direction d) {
  return round_prefix + ".whh." + std::string(direction_name(d));
}

void init_srnn(ParamSet<float>& params, const std::string& prefix, std::size_t c_in, const SrnnConfig& cfg, Rng& rng) {
  if (cfg.rounds < 1) throw std::invalid_argument("srnn: rounds must be >= 1");
  if (cfg.c_hid == 0 || cfg.c_out == 0) throw std::invalid_argument("srnn: widths must be positive");
  std::size_t in = c_in;
  for (int r = 0; r < cfg.rounds; ++r) {
    const std::string rp = round_prefix(prefix, r);
    nn::init_conv(params, rp + ".in", cfg.c_hid, in, 1, rng);
    for (Direction d : kAllDirections) {
      Tensor<float> eye({cfg.c_hid, cfg.c_hid, 1, 1});
      for (std::size_t i = 0; i < cfg.c_hid; ++i) eye.at(i, i, 0, 0) = 1.0f;
      params[whh_name(rp, d)] = std::move(eye);
    }
    if (r + 1 < cfg.rounds) {
      nn::init_conv(params, rp + ".mix", cfg.c_out, 4 * cfg.c_hid, 1, rng);
    } else {
      nn::zero_conv(params, rp + ".mix", cfg.c_out, 4 * cfg.c_hid, 1);
    }
    in = cfg.c_out;
  }
}

template <typename T>
Var srnn_round(ParamBinder<T>& p, const std::string& rp, Var x) {
  Tape<T>& t = p.tape();
  const Var h = nn::conv(p, rp + ".in", x);
  std::array<Var, 4> scans;
  for (std::size_t i = 0; i < kAllDirections.size(); ++i) {
    scans[i] = ops::irnn_scan(t, h, p(whh_name(rp, kAllDirections[i])), kAllDirections[i]);
  }
  const Var cat = ops::concat_channels(t, std::span<const Var>(scans));
  return nn::conv(p, rp + ".mix", cat);
}

template <typename T>
Var srnn_module(ParamBinder<T>& p, const std::string& prefix, Var x, const SrnnConfig& cfg) {
  if (cfg.rounds < 1) throw std::invalid_argument("srnn: rounds must be >= 1");
  for (int r = 0; r < cfg.rounds; ++r) x = srnn_round(p, round_prefix(prefix, r), x);
  return x;
}

template Var srnn_round(ParamBinder<float>&, const std::string&, Var);
template Var srnn_round(ParamBinder<double>&, const std::string&, Var);
template Var srnn_module(ParamBinder<float>&, const std::string&, Var, const SrnnConfig&);
template Var srnn_module(ParamBinder<double>&, const std::string&, Var, const SrnnConfig&);

}  // namespace fpnsrnn
