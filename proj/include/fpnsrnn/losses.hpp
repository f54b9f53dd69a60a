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

#include <span>
#include <vector>

#include "fpnsrnn/autograd.hpp"

namespace fpnsrnn {

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before taking logs.
inline constexpr double kProbEps = 1e-7;

// Plain evaluations of the training losses, used for golden values and as the
// arithmetic core of the tape ops below.

/// 0.5 x^2 if |x| < beta, else |x| - 0.5 beta.
double smooth_l1(double x, double beta = 1.0);
/// Sum of smooth_l1 over residuals divided by their count (0 when empty).
double smooth_l1_loss(std::span<const double> residuals, double beta = 1.0);

/// Mean binary cross-entropy of probabilities against {0, 1} labels.
double binary_cross_entropy(std::span<const double> probs, std::span<const double> labels);

struct ObjectnessResult {
  double value = 0.0;
  std::size_t count = 0;
  /// Set when every anchor was ignored and the loss defaulted to 0.
  bool empty_warning = false;
};

/// Labels are 1 (foreground), 0 (background) or -1 (ignored, excluded from n).
ObjectnessResult objectness_loss(std::span<const double> probs, std::span<const int> labels);

/// Mean over rows of -log softmax(logits_row)[true_class]; logits are row-major
/// rows x classes.
double classification_loss(std::span<const double> logits, std::size_t classes,
                           std::span<const std::size_t> true_class);

/// Mean binary cross-entropy over an m x m mask.
double mask_loss(std::span<const double> probs, std::span<const double> truth);

namespace ops {

/// Mean BCE of sigmoid(logits) against constant targets of the same shape.
template <typename T>
Var bce_with_logits(Tape<T>& t, Var logits, const Tensor<T>& targets);

/// Mean softmax cross-entropy; logits are (rows, classes, 1, 1).
template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const std::size_t> true_class);

/// Mean smooth-L1 of (pred - target) over all elements.
template <typename T>
Var smooth_l1_loss(Tape<T>& t, Var pred, const Tensor<T>& target, double beta);

}  // namespace ops

}  // namespace fpnsrnn
