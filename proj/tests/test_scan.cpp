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

#include "fpnsrnn/rng.hpp"
#include "fpnsrnn/scan.hpp"

using namespace fpnsrnn;

namespace {

Tensor<double> identity(std::size_t c) {
  Tensor<double> w({c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) w.at(i, i, 0, 0) = 1.0;
  return w;
}

}  // namespace

TEST(Scan, IdentityWeightsGiveDirectionalCumulativeSums) {
  Rng rng(11);
  const auto x = rng.uniform_tensor<double>({2, 3, 5, 7}, 0, 1);
  const auto w = identity(3);
  const auto right = kernels::irnn_scan(x, w, Direction::Right);
  const auto up = kernels::irnn_scan(x, w, Direction::Up);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      s += x.at(1, c, 2, j);
      EXPECT_EQ(right.at(1, c, 2, j), s);
    }
    s = 0;
    for (std::size_t i = 5; i-- > 0;) {
      s += x.at(0, c, i, 4);
      EXPECT_EQ(up.at(0, c, i, 4), s);
    }
  }
}

TEST(Scan, ParallelMatchesReferenceAllDirections) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Shape s{1 + rng.below(2), 1 + rng.below(4), 1 + rng.below(9), 1 + rng.below(9)};
    const auto x = rng.uniform_tensor<double>(s, -1, 1);
    const auto w = rng.uniform_tensor<double>({s.c, s.c, 1, 1}, -0.6, 0.6);
    for (Direction d : kAllDirections) {
      EXPECT_EQ(kernels::irnn_scan(x, w, d), reference::irnn_scan(x, w, d)) << direction_name(d) << s.str();
    }
  }
}

TEST(Scan, ReluClampsNegativeStates) {
  Tensor<double> x({1, 1, 1, 4}, std::vector<double>{1, -3, 1, 1});
  const auto y = kernels::irnn_scan(x, identity(1), Direction::Right);
  EXPECT_EQ(y.vec(), (std::vector<double>{1, 0, 1, 2}));
  const auto l = kernels::irnn_scan(x, identity(1), Direction::Left);
  EXPECT_EQ(l.vec(), (std::vector<double>{1, 0, 2, 1}));
}

TEST(Scan, RejectsMismatchedRecurrentMatrix) {
  Tensor<double> x({1, 3, 2, 2});
  EXPECT_THROW(kernels::irnn_scan(x, identity(2), Direction::Down), ShapeError);
}

TEST(Scan, BackwardMatchesFiniteDifferenceOnLinearRegion) {
  Rng rng(13);
  const auto x = rng.uniform_tensor<double>({1, 2, 3, 4}, 0.1, 1);
  auto w = identity(2);
  w.at(0, 1, 0, 0) = 0.2;
  w.at(1, 0, 0, 0) = 0.1;
  for (Direction d : kAllDirections) {
    const auto y = kernels::irnn_scan(x, w, d);
    Tensor<double> gy(y.shape(), 1.0), gx(x.shape()), gw(w.shape());
    kernels::irnn_scan_backward(y, w, gy, d, &gx, &gw);
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double sp = 0, sm = 0;
      const auto yp = kernels::irnn_scan(xp, w, d), ym = kernels::irnn_scan(xm, w, d);
      for (double v : yp.vec()) sp += v;
      for (double v : ym.vec()) sm += v;
      EXPECT_NEAR(gx[i], (sp - sm) / (2 * h), 1e-6);
    }
  }
}
