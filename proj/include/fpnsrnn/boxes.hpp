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
#include <utility>
#include <vector>

namespace fpnsrnn {

/// Center/extent box in input-image pixels. A pixel (i, j) covers
/// [j, j + 1) x [i, i + 1), so its center is (j + 0.5, i + 0.5).
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double x0() const { return x - 0.5 * w; }
  double y0() const { return y - 0.5 * h; }
  double x1() const { return x + 0.5 * w; }
  double y1() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  static Box from_corners(double x0, double y0, double x1, double y1) {
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }
};

/// Regression target (d_x, d_y, d_w, d_h) from a reference box to a target box.
struct Delta {
  double dx = 0, dy = 0, dw = 0, dh = 0;
};

// Literal form: d_x = g_x - p_x, d_y = g_y - p_y, d_w = log(g_w / p_w),
// d_h = log(g_h / p_h). With `normalized` the center offsets are divided by
// the reference extents (the usual R-CNN parameterization).
Delta encode_delta(const Box& p, const Box& g, bool normalized = false);
Box decode_delta(const Box& p, const Delta& d, bool normalized = false);

double iou(const Box& a, const Box& b);
Box clip_box(const Box& b, double width, double height);

struct AnchorLevel {
  int stride = 0;
  double size = 0;
  std::size_t h = 0, w = 0;
  /// Row-major over cells: anchors[i * w + j] for cell (i, j).
  std::vector<Box> anchors;
};

/// One square anchor per feature cell per level.
struct AnchorGrid {
  std::vector<AnchorLevel> levels;

  std::size_t total() const;
  /// Flat concatenation in level order.
  std::vector<Box> flat() const;
};

/// Anchor for cell (i, j) at stride s is centered at ((j + 0.5) s, (i + 0.5) s).
AnchorGrid generate_anchors(std::span<const std::pair<std::size_t, std::size_t>> level_dims,
                            std::span<const double> sizes, std::span<const int> strides);

inline constexpr std::int8_t kBackground = 0;
inline constexpr std::int8_t kForeground = 1;
inline constexpr std::int8_t kIgnore = -1;

struct MatchLabels {
  std::vector<std::int8_t> label;
  /// Matched ground-truth index per anchor (meaningful for foreground).
  std::vector<int> gt_index;
};

// IoU >= fg_thresh -> foreground, < bg_thresh -> background, otherwise
// ignore. Each ground truth's best anchor (lowest index on ties) is forced to
// foreground and matched to it.
MatchLabels match_anchors(std::span<const Box> anchors, std::span<const Box> gt, double fg_thresh = 0.7,
                          double bg_thresh = 0.3);

/// Greedy suppression by descending score (ties to the lower index); returns
/// kept indices in selection order.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_thresh = 0.7,
                             std::size_t keep = 1000);

/// Index of the level whose anchor size is nearest to sqrt(w h) in log scale.
std::size_t level_for_box(const Box& b, std::span<const double> anchor_sizes);

}  // namespace fpnsrnn
