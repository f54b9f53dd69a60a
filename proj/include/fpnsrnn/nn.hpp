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

// Parameter naming and initialization shared by the network builders. A conv
// or dense layer called "name" owns "name.w" and "name.b".
namespace fpnsrnn::nn {

/// Weights uniform in +-sqrt(6 / fan_in), bias zero.
void init_conv(ParamSet<float>& params, const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k,
               Rng& rng);
void init_fc(ParamSet<float>& params, const std::string& name, std::size_t out, std::size_t in, Rng& rng);

/// Zero weights and bias.
void zero_conv(ParamSet<float>& params, const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k);

template <typename T>
Var conv(ParamBinder<T>& p, const std::string& name, Var x, int stride = 1);
template <typename T>
Var conv_relu(ParamBinder<T>& p, const std::string& name, Var x, int stride = 1);
template <typename T>
Var fc(ParamBinder<T>& p, const std::string& name, Var x);

/// Total element count of all parameters whose name starts with `prefix`.
std::size_t parameter_count(const ParamSet<float>& params, const std::string& prefix = "");

}  // namespace fpnsrnn::nn
