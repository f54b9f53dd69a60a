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

#include "fpnsrnn/nn.hpp"

#include <cmath>

#include "fpnsrnn/ops.hpp"

namespace fpnsrnn::nn {

void init_conv(ParamSet<float>& params, const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k,
               Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
  params[name + ".w"] = rng.uniform_tensor<float>({c_out, c_in, k, k}, -bound, bound);
  params[name + ".b"] = Tensor<float>({1, c_out, 1, 1});
}

void init_fc(ParamSet<float>& params, const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
  init_conv(params, name, out, in, 1, rng);
}

void zero_conv(ParamSet<float>& params, const std::string& name, std::size_t c_out, std::size_t c_in, std::size_t k) {
  params[name + ".w"] = Tensor<float>({c_out, c_in, k, k});
  params[name + ".b"] = Tensor<float>({1, c_out, 1, 1});
}

template <typename T>
Var conv(ParamBinder<T>& p, const std::string& name, Var x, int stride) {
  return ops::conv2d(p.tape(), x, p(name + ".w"), p(name + ".b"), stride);
}

template <typename T>
Var conv_relu(ParamBinder<T>& p, const std::string& name, Var x, int stride) {
  return ops::relu(p.tape(), conv(p, name, x, stride));
}

template <typename T>
Var fc(ParamBinder<T>& p, const std::string& name, Var x) {
  return ops::fully_connected(p.tape(), x, p(name + ".w"), p(name + ".b"));
}

std::size_t parameter_count(const ParamSet<float>& params, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& [k, v] : params) {
    if (k.compare(0, prefix.size(), prefix) == 0) n += v.numel();
  }
  return n;
}

template Var conv(ParamBinder<float>&, const std::string&, Var, int);
template Var conv(ParamBinder<double>&, const std::string&, Var, int);
template Var conv_relu(ParamBinder<float>&, const std::string&, Var, int);
template Var conv_relu(ParamBinder<double>&, const std::string&, Var, int);
template Var fc(ParamBinder<float>&, const std::string&, Var);
template Var fc(ParamBinder<double>&, const std::string&, Var);

}  // namespace fpnsrnn::nn
