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
#include <span>
#include <string>
#include <vector>

#include "fpnsrnn/autograd.hpp"

namespace fpnsrnn {

/// Builds the function under test from leaf handles. A non-scalar result is
/// reduced with a fixed random projection before differentiation.
using GradFn = std::function<Var(Tape<double>&, std::span<const Var>)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 1;
  /// Check at most this many elements per input (chosen by seed); 0 checks all.
  std::size_t max_elements = 0;
  /// Inputs that are held constant (not differentiated).
  std::vector<bool> frozen;
};

struct GradCheckReport {
  std::string op;
  /// max_i |g_analytic - g_numeric| / max(1, |g_numeric|) for each input.
  std::vector<double> max_rel_error;
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  /// Elements whose central difference straddled a kink and used a one-sided
  /// or shortened difference instead.
  std::size_t kink_fallbacks = 0;
  /// Elements where no kink-free difference could be formed; excluded.
  std::size_t unresolved = 0;
};

// Compares reverse-mode gradients against finite differences in 64-bit. When
// the kink signature recorded by the tape changes between x-h, x and x+h, the
// straddling side is dropped (or the step shrunk) since the function is not
// differentiable across that interval. A non-finite analytic gradient throws
// NumericError naming the op.
GradCheckReport grad_check(const std::string& op, const GradFn& fn, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& opts = {});

}  // namespace fpnsrnn
