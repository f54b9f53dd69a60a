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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fpnsrnn/boxes.hpp"
#include "fpnsrnn/data.hpp"
#include "fpnsrnn/fpn.hpp"

namespace fpnsrnn {

struct HeadConfig {
  std::size_t classes = kNumClasses;
  std::size_t box_hidden = 64;
  std::size_t mask_width = 16;
  int box_pool = 7;
  int mask_pool = 14;
  /// 14, or 28 with a 2x upsample before the output layer.
  int mask_res = 14;
};

struct DetectConfig {
  std::array<double, kLevels> anchor_sizes{32, 64, 128, 256};
  double anchor_fg_iou = 0.7;
  double anchor_bg_iou = 0.3;
  double proposal_nms = 0.7;
  std::size_t proposals_per_level = 1000;
  /// RPN proposals per training step, added to the ground-truth boxes.
  std::size_t train_proposals = 32;
  std::size_t test_proposals = 32;
  double roi_fg_iou = 0.5;
  std::size_t max_mask_rois = 6;
  double score_thresh = 0.5;
  double detection_nms = 0.5;
  std::size_t max_detections = 20;
  /// Mask ROIs are the box grown by this fraction of its extent.
  double mask_margin = 0.25;
  double smooth_l1_beta = 1.0;
  bool normalized_deltas = false;
};

struct ModelConfig {
  ExtractorConfig extractor;
  HeadConfig heads;
  DetectConfig detect;
};

/// Extractor plus one shared weight set per head.
ParamSet<float> init_model(const ModelConfig& cfg, std::uint64_t seed);
void init_heads(ParamSet<float>& params, const ModelConfig& cfg, Rng& rng);

struct RpnVars {
  LevelVars objectness;  // (n, 1, h, w) logits
  LevelVars deltas;      // (n, 4, h, w)
};

// 3x3 conv + ReLU, then sibling 1x1 convs for the objectness logit and the
// four anchor deltas. Applied to every level with the same weights.
template <typename T>
RpnVars rpn_head(ParamBinder<T>& p, const LevelVars& pyramid);

/// (rois, P, 7, 7) -> class logits (rois, classes, 1, 1) and per-class deltas
/// (rois, 4 classes, 1, 1) through two hidden dense layers.
template <typename T>
std::pair<Var, Var> box_head(ParamBinder<T>& p, Var roi_features);

/// (rois, P, 14, 14) -> per-class mask logits (rois, classes, m, m) through
/// four 3x3 conv layers.
template <typename T>
Var mask_head(ParamBinder<T>& p, Var roi_features, const HeadConfig& cfg);

struct Proposal {
  std::size_t level = 0;
  Box box;
  double score = 0;
};

/// Decoded, clipped anchors per level, NMS'd and kept up to
/// `proposals_per_level` each; merged and sorted by descending score.
std::vector<Proposal> propose(const AnchorGrid& anchors, const std::array<Tensor<double>, kLevels>& objectness,
                              const std::array<Tensor<double>, kLevels>& deltas, double width, double height,
                              const DetectConfig& cfg);
/// `level x y w h score` per line.
std::string format_proposals(const std::vector<Proposal>& proposals);

AnchorGrid anchors_for(const Shape& image, const DetectConfig& cfg);
Box mask_region(const Box& b, double margin);

struct LossBreakdown {
  double objectness = 0, anchor_box = 0, classification = 0, box = 0, mask = 0, total = 0;
  bool objectness_empty = false;
  std::size_t rois = 0, fg_rois = 0, mask_rois = 0;
};

struct LossVars {
  Var total, objectness, anchor_box, classification, box, mask;
  LossBreakdown values;
};

// Sum of the RPN objectness BCE, anchor smooth-L1, ROI softmax cross-entropy,
// ROI smooth-L1 and mask BCE. Training ROIs are the ground-truth boxes plus
// the top RPN proposals, unless `fixed_rois` is supplied.
template <typename T>
LossVars training_loss(ParamBinder<T>& p, const Tensor<T>& image, const std::vector<Instance>& gt,
                       const ModelConfig& cfg, const std::vector<Box>* fixed_rois = nullptr);

struct Detection {
  std::uint8_t cls = 0;
  double score = 0;
  Box box;
  /// Sigmoid mask probabilities (m x m) over mask_region(box).
  std::vector<float> mask;
  int mask_res = 0;
};

/// RPN proposals for a single image (inference weights, no tape gradients).
std::vector<Proposal> image_proposals(const ParamSet<float>& params, const Tensor<float>& image,
                                     const ModelConfig& cfg);

std::vector<Detection> detect(const ParamSet<float>& params, const Tensor<float>& image, const ModelConfig& cfg);

// Pastes each detection's mask into its region by bilinear resampling; a pixel
// takes the class of the highest-scoring detection whose probability there
// exceeds 0.5.
LabelMask rasterize(const std::vector<Detection>& dets, std::size_t h, std::size_t w, double mask_margin);

LabelMask predict_mask(const ParamSet<float>& params, const Image& image, const ModelConfig& cfg);

}  // namespace fpnsrnn
