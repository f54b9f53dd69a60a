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
#include "fpnsrnn/kernels.hpp"
#include "fpnsrnn/scan.hpp"

// Differentiable wrappers that run a forward kernel, record it on the tape and
// register the matching vector-Jacobian product.
namespace fpnsrnn::ops {

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, int stride = 1);
template <typename T>
Var relu(Tape<T>& t, Var x);
template <typename T>
Var sigmoid(Tape<T>& t, Var x);
template <typename T>
Var softmax_channels(Tape<T>& t, Var x);
template <typename T>
Var add(Tape<T>& t, Var a, Var b);
template <typename T>
Var scale(Tape<T>& t, Var x, T factor);
template <typename T>
Var concat_channels(Tape<T>& t, std::span<const Var> parts);
template <typename T>
Var slice_channels(Tape<T>& t, Var x, std::size_t begin, std::size_t count);
template <typename T>
Var upsample2x_nearest(Tape<T>& t, Var x);
template <typename T>
Var maxpool2x2(Tape<T>& t, Var x);
template <typename T>
Var avgpool2x2(Tape<T>& t, Var x);
template <typename T>
Var fully_connected(Tape<T>& t, Var x, Var w, Var b);
template <typename T>
Var channel_l2norm_scale(Tape<T>& t, Var x, Var gamma);
template <typename T>
Var irnn_scan(Tape<T>& t, Var x, Var whh, Direction dir);

/// ROI on one of several feature levels.
struct LevelRoi {
  std::size_t level = 0;
  kernels::RoiBox box;
};

/// Bilinear ROI pooling over a multi-level pyramid; output (rois, c, res, res).
template <typename T>
Var roi_align(Tape<T>& t, std::span<const Var> levels, std::span<const double> strides,
              std::span<const LevelRoi> rois, int res);

/// A single spatial cell of one level.
struct CellRef {
  std::size_t level = 0;
  std::size_t n = 0;
  std::size_t y = 0;
  std::size_t x = 0;
};

/// Gathers the channel vectors of the listed cells into (cells, c, 1, 1).
template <typename T>
Var gather_cells(Tape<T>& t, std::span<const Var> levels, std::span<const CellRef> cells);

/// Row r of the result holds channels [idx[r] * group, idx[r] * group + group)
/// of item r of x: (items, c, h, w) -> (items, group, h, w).
template <typename T>
Var select_channel_group(Tape<T>& t, Var x, std::span<const std::size_t> idx, std::size_t group);

/// Sum of all elements of x weighted elementwise by a constant tensor.
template <typename T>
Var weighted_sum(Tape<T>& t, Var x, const Tensor<T>& weights);

/// Scalar sum of scalar vars.
template <typename T>
Var sum_scalars(Tape<T>& t, std::span<const Var> terms);

}  // namespace fpnsrnn::ops
