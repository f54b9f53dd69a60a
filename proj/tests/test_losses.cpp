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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fpnsrnn/losses.hpp"
#include "fpnsrnn/rng.hpp"

using namespace fpnsrnn;

TEST(Losses, GoldenValues) {
  const double half[] = {0.5};
  const int fg[] = {1};
  EXPECT_NEAR(objectness_loss(half, fg).value, std::numbers::ln2, 1e-12);
  const double uniform[6] = {0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  const std::size_t cls[] = {4};
  EXPECT_NEAR(classification_loss(uniform, 6, cls), std::log(6.0), 1e-12);
  const double one[] = {1.0};
  EXPECT_NEAR(mask_loss(half, one), std::numbers::ln2, 1e-12);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 1.5);
}

TEST(Losses, ObjectnessIgnoresMarkedAnchors) {
  const double p[] = {0.5, 0.01, 0.9};
  const int y[] = {1, -1, 0};
  const ObjectnessResult r = objectness_loss(p, y);
  EXPECT_EQ(r.count, 2u);
  EXPECT_NEAR(r.value, 0.5 * (std::log(2.0) - std::log(0.1)), 1e-12);
  const int all_ignored[] = {-1, -1, -1};
  const ObjectnessResult e = objectness_loss(p, all_ignored);
  EXPECT_TRUE(e.empty_warning);
  EXPECT_EQ(e.value, 0.0);
}

TEST(Losses, ProbabilitiesClampedAwayFromZero) {
  const double p[] = {0.0, 1.0};
  const double y[] = {1.0, 0.0};
  const double v = binary_cross_entropy(p, y);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(kProbEps), 1e-6);
}

TEST(Losses, SmoothL1Branches) {
  EXPECT_NEAR(smooth_l1(1.0 - 1e-12), smooth_l1(1.0 + 1e-12), 1e-9);
  // Quadratic branch is not rescaled by beta, so other betas jump at the boundary.
  EXPECT_DOUBLE_EQ(smooth_l1(0.4, 0.5), 0.08);
  EXPECT_DOUBLE_EQ(smooth_l1(3.0, 2.0), 2.0);
  const double r[] = {0.5, 2.0};
  EXPECT_DOUBLE_EQ(smooth_l1_loss(r), (0.125 + 1.5) / 2);
  EXPECT_THROW(smooth_l1_loss(r, 0.0), std::invalid_argument);
}

TEST(Losses, ClassificationRejectsBadIndex) {
  const double logits[6] = {};
  const std::size_t cls[] = {6};
  EXPECT_THROW(classification_loss(logits, 6, cls), std::invalid_argument);
  const double mask[3] = {};
  const double truth[4] = {};
  EXPECT_THROW(mask_loss(mask, truth), std::invalid_argument);
}

TEST(Losses, TapeOpsAgreeWithPlainEvaluations) {
  Rng rng(31);
  Tape<double> t;
  const auto z = rng.uniform_tensor<double>({3, 6, 1, 1}, -3, 3);
  const std::size_t cls[] = {0, 5, 2};
  const Var ce = ops::softmax_cross_entropy(t, t.leaf(z), cls);
  EXPECT_NEAR(t.value(ce)[0], classification_loss(z.vec(), 6, cls), 1e-12);

  Tensor<double> y({3, 6, 1, 1});
  std::vector<double> probs, labels;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    y[i] = i % 3 == 0 ? 1.0 : 0.0;
    probs.push_back(1.0 / (1.0 + std::exp(-z[i])));
    labels.push_back(y[i]);
  }
  const Var bce = ops::bce_with_logits(t, t.leaf(z), y);
  EXPECT_NEAR(t.value(bce)[0], binary_cross_entropy(probs, labels), 1e-12);

  const auto target = rng.uniform_tensor<double>(z.shape(), -3, 3);
  std::vector<double> res;
  for (std::size_t i = 0; i < z.numel(); ++i) res.push_back(z[i] - target[i]);
  const Var sl = ops::smooth_l1_loss(t, t.leaf(z), target, 1.0);
  EXPECT_NEAR(t.value(sl)[0], smooth_l1_loss(res, 1.0), 1e-12);
}
