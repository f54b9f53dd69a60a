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

#include "fpnsrnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace fpnsrnn {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

double bce_term(double p, double y) {
  p = clamp_prob(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace

double smooth_l1(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * x * x : a - 0.5 * beta;
}

double smooth_l1_loss(std::span<const double> residuals, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("smooth_l1_loss: beta must be positive");
  if (residuals.empty()) return 0.0;
  double acc = 0;
  for (double r : residuals) acc += smooth_l1(r, beta);
  return acc / static_cast<double>(residuals.size());
}

double binary_cross_entropy(std::span<const double> probs, std::span<const double> labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("binary_cross_entropy: size mismatch");
  if (probs.empty()) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) acc += bce_term(probs[i], labels[i]);
  return acc / static_cast<double>(probs.size());
}

ObjectnessResult objectness_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("objectness_loss: size mismatch");
  ObjectnessResult r;
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] < 0) continue;
    acc += bce_term(probs[i], labels[i] > 0 ? 1.0 : 0.0);
    ++r.count;
  }
  if (r.count == 0) {
    r.empty_warning = true;
    return r;
  }
  r.value = acc / static_cast<double>(r.count);
  return r;
}

double classification_loss(std::span<const double> logits, std::size_t classes,
                           std::span<const std::size_t> true_class) {
  if (logits.size() != classes * true_class.size()) {
    throw std::invalid_argument("classification_loss: logits do not match rows x classes");
  }
  if (true_class.empty()) return 0.0;
  double acc = 0;
  for (std::size_t r = 0; r < true_class.size(); ++r) {
    if (true_class[r] >= classes) {
      throw std::invalid_argument("classification_loss: class index " + std::to_string(true_class[r]) +
                                  " out of range for " + std::to_string(classes) + " classes");
    }
    const double* row = logits.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
    acc += -(row[true_class[r]] - mx - std::log(sum));
  }
  return acc / static_cast<double>(true_class.size());
}

double mask_loss(std::span<const double> probs, std::span<const double> truth) {
  if (probs.size() != truth.size()) {
    throw std::invalid_argument("mask_loss: prediction has " + std::to_string(probs.size()) +
                                " cells, truth has " + std::to_string(truth.size()));
  }
  return binary_cross_entropy(probs, truth);
}

namespace ops {

template <typename T>
Var bce_with_logits(Tape<T>& t, Var logits, const Tensor<T>& targets) {
  const Tensor<T>& z = t.value(logits);
  require_same_shape(z.shape(), targets.shape(), "bce_with_logits");
  const std::size_t n = z.numel();
  auto dz = std::make_shared<Tensor<T>>(z.shape());
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
    const double pc = clamp_prob(p);
    const double y = targets[i];
    acc += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    const bool clamped = pc != p;
    (*dz)[i] = clamped ? T(0) : static_cast<T>((p - y) / static_cast<double>(n));
    if (t.tracking_kinks()) t.note_kink(clamped ? 0x51ull + i : 0x17ull);
  }
  const T value = n == 0 ? T(0) : static_cast<T>(acc / static_cast<double>(n));
  return t.record("bce_with_logits", scalar_tensor(value), {logits}, [logits, dz](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>&) {
    Tensor<T>& g = tp.grad_buffer(logits);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[0] * (*dz)[i];
  });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const std::size_t> true_class) {
  const Tensor<T>& z = t.value(logits);
  const std::size_t rows = z.shape().n, classes = z.shape().c * z.shape().plane();
  if (rows != true_class.size()) throw ShapeError("softmax_cross_entropy: label count does not match " + z.shape().str());
  auto dz = std::make_shared<Tensor<T>>(z.shape());
  double acc = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (true_class[r] >= classes) {
      throw std::invalid_argument("softmax_cross_entropy: class index " + std::to_string(true_class[r]) +
                                  " out of range");
    }
    const T* row = z.ptr() + r * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
    const double lse = mx + std::log(sum);
    acc += lse - static_cast<double>(row[true_class[r]]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(row[c]) - lse);
      (*dz)[r * classes + c] = static_cast<T>((p - (c == true_class[r] ? 1.0 : 0.0)) / static_cast<double>(rows));
    }
  }
  const T value = rows == 0 ? T(0) : static_cast<T>(acc / static_cast<double>(rows));
  return t.record("softmax_cross_entropy", scalar_tensor(value), {logits},
                  [logits, dz](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>&) {
                    Tensor<T>& g = tp.grad_buffer(logits);
                    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[0] * (*dz)[i];
                  });
}

template <typename T>
Var smooth_l1_loss(Tape<T>& t, Var pred, const Tensor<T>& target, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("smooth_l1_loss: beta must be positive");
  const Tensor<T>& p = t.value(pred);
  require_same_shape(p.shape(), target.shape(), "smooth_l1_loss");
  const std::size_t n = p.numel();
  auto dp = std::make_shared<Tensor<T>>(p.shape());
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(p[i]) - static_cast<double>(target[i]);
    acc += smooth_l1(r, beta);
    const bool inside = std::abs(r) < beta;
    const double g = inside ? r : (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0));
    (*dp)[i] = static_cast<T>(g / static_cast<double>(n));
    if (t.tracking_kinks()) t.note_kink(inside ? 0x3ull : (r > 0 ? 0x5ull : 0x9ull));
  }
  const T value = n == 0 ? T(0) : static_cast<T>(acc / static_cast<double>(n));
  return t.record("smooth_l1_loss", scalar_tensor(value), {pred}, [pred, dp](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>&) {
    Tensor<T>& g = tp.grad_buffer(pred);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[0] * (*dp)[i];
  });
}

template Var bce_with_logits(Tape<float>&, Var, const Tensor<float>&);
template Var bce_with_logits(Tape<double>&, Var, const Tensor<double>&);
template Var softmax_cross_entropy(Tape<float>&, Var, std::span<const std::size_t>);
template Var softmax_cross_entropy(Tape<double>&, Var, std::span<const std::size_t>);
template Var smooth_l1_loss(Tape<float>&, Var, const Tensor<float>&, double);
template Var smooth_l1_loss(Tape<double>&, Var, const Tensor<double>&, double);

}  // namespace ops

}  // namespace fpnsrnn
