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
#include <span>
#include <vector>

#include "fpnsrnn/tensor.hpp"

// Forward and vector-Jacobian kernels. Backward kernels accumulate into the
// supplied gradient buffers (which must already have the right shape); a null
// pointer skips that gradient.
//
// Parallel kernels split work so that every output element is owned by one
// iteration and every reduction runs in a fixed order, so results do not
// depend on the thread count.
namespace fpnsrnn::kernels {

// Conv weights are (c_out, c_in, k, k) with k odd; bias is (1, c_out, 1, 1).
// Padding is (k - 1) / 2, output extent is ceil(extent / stride).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride);
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx);

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x);
template <typename T>
void softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);
/// gx[:, begin:begin+count] += gy
template <typename T>
void slice_channels_backward(const Tensor<T>& gy, std::size_t begin, Tensor<T>& gx);

template <typename T>
Tensor<T> upsample2x_nearest(const Tensor<T>& x);
template <typename T>
void upsample2x_nearest_backward(const Tensor<T>& gy, Tensor<T>& gx);

/// Requires even spatial dims. `argmax` receives the flat input index per output.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax);
template <typename T>
void maxpool2x2_backward(const std::vector<std::uint32_t>& argmax, const Tensor<T>& gy, Tensor<T>& gx);

template <typename T>
Tensor<T> avgpool2x2(const Tensor<T>& x);
template <typename T>
void avgpool2x2_backward(const Tensor<T>& gy, Tensor<T>& gx);

// x is flattened per batch item; w is (out, in, 1, 1); result is (n, out, 1, 1).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T>
void fully_connected_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                              Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

inline constexpr double kL2NormEps = 1e-12;

// y = gamma * x / sqrt(sum_c x_c^2 + eps) at every (n, h, w); gamma is (1, c, 1, 1).
template <typename T>
Tensor<T> channel_l2norm_scale(const Tensor<T>& x, const Tensor<T>& gamma);
template <typename T>
void channel_l2norm_scale_backward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& gy,
                                   Tensor<T>* gx, Tensor<T>* ggamma);

/// Axis-aligned region in input-image pixels, [x0, x1) x [y0, y1).
struct RoiBox {
  std::size_t batch = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Bilinear sample at the centers of a res x res grid over each box. A feature
// cell (i, j) of a map with the given stride is centered at image position
// ((j + 0.5) * stride, (i + 0.5) * stride). Result is (rois, c, res, res).
template <typename T>
Tensor<T> roi_align(const Tensor<T>& feat, std::span<const RoiBox> rois, int res, double stride);
template <typename T>
void roi_align_backward(std::span<const RoiBox> rois, int res, double stride, const Tensor<T>& gy,
                        Tensor<T>& gfeat);

}  // namespace fpnsrnn::kernels

// Straightforward serial implementations kept as test oracles and benchmark
// baselines. Their accumulation order matches the parallel kernels.
namespace fpnsrnn::reference {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride);
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb);

}  // namespace fpnsrnn::reference
