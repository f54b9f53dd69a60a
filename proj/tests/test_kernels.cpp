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

#include "fpnsrnn/kernels.hpp"
#include "fpnsrnn/rng.hpp"

using namespace fpnsrnn;

namespace {

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

struct ConvCase {
  Shape x;
  std::size_t co, k;
  int stride;
};

const ConvCase kConvCases[] = {
    {{1, 1, 7, 9}, 3, 3, 1},   {{2, 3, 8, 8}, 5, 3, 2},  {{2, 4, 5, 6}, 6, 1, 1},
    {{1, 2, 9, 7}, 4, 1, 2},   {{1, 6, 4, 4}, 9, 3, 1},  {{3, 2, 1, 1}, 2, 3, 1},
    {{1, 5, 11, 3}, 7, 3, 2},
};

}  // namespace

TEST(Conv, ParallelMatchesReferenceForward) {
  Rng rng(1);
  for (const auto& c : kConvCases) {
    const auto x = rng.uniform_tensor<double>(c.x, -1, 1);
    const auto w = rng.uniform_tensor<double>({c.co, c.x.c, c.k, c.k}, -1, 1);
    const auto b = rng.uniform_tensor<double>({1, c.co, 1, 1}, -1, 1);
    const auto fast = kernels::conv2d(x, w, b, c.stride);
    const auto slow = reference::conv2d(x, w, b, c.stride);
    EXPECT_LE(max_abs_diff(fast, slow), 1e-12) << c.x.str();
    EXPECT_EQ(fast.shape().h, (c.x.h + c.stride - 1) / c.stride);
  }
}

TEST(Conv, ParallelMatchesReferenceBackward) {
  Rng rng(2);
  for (const auto& c : kConvCases) {
    const auto x = rng.uniform_tensor<double>(c.x, -1, 1);
    const auto w = rng.uniform_tensor<double>({c.co, c.x.c, c.k, c.k}, -1, 1);
    const auto b = rng.uniform_tensor<double>({1, c.co, 1, 1}, -1, 1);
    const auto gy = rng.uniform_tensor<double>(kernels::conv2d(x, w, b, c.stride).shape(), -1, 1);
    Tensor<double> gx1(x.shape()), gw1(w.shape()), gb1(b.shape());
    Tensor<double> gx2(x.shape()), gw2(w.shape()), gb2(b.shape());
    kernels::conv2d_backward(x, w, gy, c.stride, &gx1, &gw1, &gb1);
    reference::conv2d_backward(x, w, gy, c.stride, &gx2, &gw2, &gb2);
    EXPECT_LE(max_abs_diff(gx1, gx2), 1e-12) << c.x.str();
    EXPECT_LE(max_abs_diff(gw1, gw2), 1e-12) << c.x.str();
    EXPECT_LE(max_abs_diff(gb1, gb2), 1e-12) << c.x.str();
  }
}

TEST(Conv, DirectSumOracle) {
  // Single 3x3 tap sums computed by hand on a 3x3 input of ones.
  Tensor<double> x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0), b({1, 1, 1, 1}, 0.5);
  const auto y = kernels::conv2d(x, w, b, 1);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4.5);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.5);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.5);
  EXPECT_THROW(kernels::conv2d(x, Tensor<double>({1, 2, 3, 3}), b, 1), ShapeError);
}

TEST(Kernels, ResultsIndependentOfThreadCount) {
  Rng rng(5);
  const auto x = rng.uniform_tensor<float>({2, 8, 16, 16}, -1, 1);
  const auto w = rng.uniform_tensor<float>({12, 8, 3, 3}, -1, 1);
  const auto b = rng.uniform_tensor<float>({1, 12, 1, 1}, -1, 1);
  const int saved = num_threads();
  set_num_threads(1);
  const auto y1 = kernels::conv2d(x, w, b, 1);
  Tensor<float> gx1(x.shape()), gw1(w.shape());
  kernels::conv2d_backward(x, w, y1, 1, &gx1, &gw1, static_cast<Tensor<float>*>(nullptr));
  set_num_threads(4);
  const auto y4 = kernels::conv2d(x, w, b, 1);
  Tensor<float> gx4(x.shape()), gw4(w.shape());
  kernels::conv2d_backward(x, w, y4, 1, &gx4, &gw4, static_cast<Tensor<float>*>(nullptr));
  set_num_threads(saved);
  EXPECT_EQ(y1, y4);
  EXPECT_EQ(gx1, gx4);
  EXPECT_EQ(gw1, gw4);
}

TEST(Kernels, PoolingAndUpsampling) {
  Tensor<double> x({1, 1, 2, 4}, std::vector<double>{1, 5, 2, 2, 3, 4, 8, 0});
  std::vector<std::uint32_t> arg;
  const auto mx = kernels::maxpool2x2(x, &arg);
  EXPECT_EQ(mx.vec(), (std::vector<double>{5, 8}));
  const auto av = kernels::avgpool2x2(x);
  EXPECT_EQ(av.vec(), (std::vector<double>{3.25, 3.0}));
  Tensor<double> g({1, 1, 1, 2}, std::vector<double>{1, 2});
  Tensor<double> gx(x.shape());
  kernels::maxpool2x2_backward(arg, g, gx);
  EXPECT_EQ(gx.vec(), (std::vector<double>{0, 1, 0, 0, 0, 0, 2, 0}));

  const auto up = kernels::upsample2x_nearest(mx);
  EXPECT_EQ(up.shape(), (Shape{1, 1, 2, 4}));
  EXPECT_EQ(up.vec(), (std::vector<double>{5, 5, 8, 8, 5, 5, 8, 8}));
  Tensor<double> gup(mx.shape());
  kernels::upsample2x_nearest_backward(Tensor<double>(up.shape(), 1.0), gup);
  EXPECT_EQ(gup.vec(), (std::vector<double>{4, 4}));
}

TEST(Kernels, SoftmaxSumsToOnePerPixel) {
  Rng rng(6);
  const auto x = rng.uniform_tensor<double>({2, 5, 3, 3}, -20, 20);
  const auto y = kernels::softmax_channels(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 9; ++p) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += y[(n * 5 + c) * 9 + p];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Kernels, FullyConnectedOracle) {
  Rng rng(7);
  const auto x = rng.uniform_tensor<double>({3, 2, 2, 2}, -1, 1);
  const auto w = rng.uniform_tensor<double>({4, 8, 1, 1}, -1, 1);
  const auto b = rng.uniform_tensor<double>({1, 4, 1, 1}, -1, 1);
  const auto y = kernels::fully_connected(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{3, 4, 1, 1}));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < 8; ++i) acc += w[o * 8 + i] * x[n * 8 + i];
      EXPECT_NEAR(y.at(n, o, 0, 0), acc, 1e-12);
    }
}

TEST(Kernels, L2NormScaleHasGammaNorm) {
  Rng rng(8);
  const auto x = rng.uniform_tensor<double>({1, 6, 2, 3}, -1, 1);
  Tensor<double> gamma({1, 6, 1, 1}, 3.0);
  const auto y = kernels::channel_l2norm_scale(x, gamma);
  for (std::size_t p = 0; p < 6; ++p) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += y[c * 6 + p] * y[c * 6 + p];
    EXPECT_NEAR(std::sqrt(s), 3.0, 1e-6);
  }
}

TEST(RoiAlign, ExactOnLinearMaps) {
  // Bilinear interpolation reproduces an affine map exactly away from borders.
  const std::size_t h = 16, w = 16;
  const double stride = 4.0;
  Tensor<double> f({1, 1, h, w});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) f.at(0, 0, i, j) = 0.7 * double(i) - 1.3 * double(j) + 2.0;
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const double x0 = rng.uniform(4, 30), y0 = rng.uniform(4, 30);
    const kernels::RoiBox r{0, x0, y0, x0 + rng.uniform(2, 28), y0 + rng.uniform(2, 28)};
    const int res = 7;
    const auto out = kernels::roi_align(f, std::span<const kernels::RoiBox>(&r, 1), res, stride);
    for (int a = 0; a < res; ++a)
      for (int b = 0; b < res; ++b) {
        const double yi = r.y0 + (a + 0.5) * (r.y1 - r.y0) / res;
        const double xi = r.x0 + (b + 0.5) * (r.x1 - r.x0) / res;
        const double fy = yi / stride - 0.5, fx = xi / stride - 0.5;
        EXPECT_NEAR(out.at(0, 0, a, b), 0.7 * fy - 1.3 * fx + 2.0, 1e-9);
      }
  }
}

TEST(RoiAlign, BackwardIsAdjoint) {
  Rng rng(10);
  const auto f = rng.uniform_tensor<double>({2, 3, 8, 8}, -1, 1);
  const std::vector<kernels::RoiBox> rois{{0, 1, 2, 20, 25}, {1, 5.5, 3.25, 30, 31}, {0, 0, 0, 32, 32}};
  const auto y = kernels::roi_align(f, std::span<const kernels::RoiBox>(rois), 5, 4.0);
  const auto g = rng.uniform_tensor<double>(y.shape(), -1, 1);
  Tensor<double> gf(f.shape());
  kernels::roi_align_backward(std::span<const kernels::RoiBox>(rois), 5, 4.0, g, gf);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < f.numel(); ++i) rhs += f[i] * gf[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(RoiAlign, RejectsDegenerateBoxes) {
  Tensor<double> f({1, 1, 4, 4});
  const kernels::RoiBox r{0, 3, 3, 3.5, 9};
  EXPECT_THROW(kernels::roi_align(f, std::span<const kernels::RoiBox>(&r, 1), 2, 4.0), ShapeError);
}
