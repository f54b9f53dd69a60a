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

#include "fpnsrnn/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fpnsrnn {

namespace {

// Keeps exp() finite for wildly wrong predicted size deltas.
const double kMaxLogScale = std::log(1000.0 / 16.0);

void require_positive(const Box& b, const char* what) {
  if (!(b.w > 0) || !(b.h > 0)) {
    throw std::invalid_argument(std::string(what) + ": box extents must be positive, got w=" + std::to_string(b.w) +
                                " h=" + std::to_string(b.h));
  }
}

}  // namespace

Delta encode_delta(const Box& p, const Box& g, bool normalized) {
  require_positive(p, "encode_delta");
  require_positive(g, "encode_delta");
  Delta d{g.x - p.x, g.y - p.y, std::log(g.w / p.w), std::log(g.h / p.h)};
  if (normalized) {
    d.dx /= p.w;
    d.dy /= p.h;
  }
  return d;
}

Box decode_delta(const Box& p, const Delta& d, bool normalized) {
  require_positive(p, "decode_delta");
  const double dx = normalized ? d.dx * p.w : d.dx;
  const double dy = normalized ? d.dy * p.h : d.dy;
  return {p.x + dx, p.y + dy, p.w * std::exp(std::min(d.dw, kMaxLogScale)),
          p.h * std::exp(std::min(d.dh, kMaxLogScale))};
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Box clip_box(const Box& b, double width, double height) {
  const double x0 = std::clamp(b.x0(), 0.0, width), x1 = std::clamp(b.x1(), 0.0, width);
  const double y0 = std::clamp(b.y0(), 0.0, height), y1 = std::clamp(b.y1(), 0.0, height);
  return Box::from_corners(x0, y0, x1, y1);
}

std::size_t AnchorGrid::total() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.anchors.size();
  return n;
}

std::vector<Box> AnchorGrid::flat() const {
  std::vector<Box> out;
  out.reserve(total());
  for (const auto& l : levels) out.insert(out.end(), l.anchors.begin(), l.anchors.end());
  return out;
}

AnchorGrid generate_anchors(std::span<const std::pair<std::size_t, std::size_t>> level_dims,
                            std::span<const double> sizes, std::span<const int> strides) {
  if (sizes.size() != strides.size() || sizes.size() != level_dims.size()) {
    throw std::invalid_argument("generate_anchors: " + std::to_string(level_dims.size()) + " levels, " +
                                std::to_string(sizes.size()) + " sizes, " + std::to_string(strides.size()) +
                                " strides");
  }
  AnchorGrid grid;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    AnchorLevel lv;
    lv.stride = strides[l];
    lv.size = sizes[l];
    lv.h = level_dims[l].first;
    lv.w = level_dims[l].second;
    lv.anchors.reserve(lv.h * lv.w);
    for (std::size_t i = 0; i < lv.h; ++i) {
      for (std::size_t j = 0; j < lv.w; ++j) {
        lv.anchors.push_back({(static_cast<double>(j) + 0.5) * lv.stride, (static_cast<double>(i) + 0.5) * lv.stride,
                              lv.size, lv.size});
      }
    }
    grid.levels.push_back(std::move(lv));
  }
  return grid;
}

MatchLabels match_anchors(std::span<const Box> anchors, std::span<const Box> gt, double fg_thresh,
                          double bg_thresh) {
  if (!(0 < bg_thresh && bg_thresh <= fg_thresh && fg_thresh < 1)) {
    throw std::invalid_argument("match_anchors: need 0 < bg <= fg < 1");
  }
  MatchLabels m;
  m.label.assign(anchors.size(), kBackground);
  m.gt_index.assign(anchors.size(), -1);
  if (gt.empty()) return m;
  std::vector<std::size_t> best_anchor(gt.size(), 0);
  std::vector<double> best_anchor_iou(gt.size(), -1.0);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = -1.0;
    int arg = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(anchors[a], gt[g]);
      if (v > best) {
        best = v;
        arg = static_cast<int>(g);
      }
      if (v > best_anchor_iou[g]) {
        best_anchor_iou[g] = v;
        best_anchor[g] = a;
      }
    }
    m.gt_index[a] = arg;
    m.label[a] = best >= fg_thresh ? kForeground : (best < bg_thresh ? kBackground : kIgnore);
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    m.label[best_anchor[g]] = kForeground;
    m.gt_index[best_anchor[g]] = static_cast<int>(g);
  }
  return m;
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores, double iou_thresh,
                             std::size_t keep) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: boxes and scores differ in length");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t oi = 0; oi < order.size() && kept.size() < keep; ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && iou(boxes[i], boxes[j]) > iou_thresh) suppressed[j] = true;
    }
  }
  return kept;
}

std::size_t level_for_box(const Box& b, std::span<const double> anchor_sizes) {
  const double scale = std::log(std::sqrt(std::max(b.w * b.h, 1e-12)));
  std::size_t best = 0;
  double best_d = std::abs(scale - std::log(anchor_sizes[0]));
  for (std::size_t l = 1; l < anchor_sizes.size(); ++l) {
    const double d = std::abs(scale - std::log(anchor_sizes[l]));
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

}  // namespace fpnsrnn
