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

#include "fpnsrnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "fpnsrnn/losses.hpp"
#include "fpnsrnn/nn.hpp"
#include "fpnsrnn/ops.hpp"

namespace fpnsrnn {

void init_heads(ParamSet<float>& params, const ModelConfig& cfg, Rng& rng) {
  const std::size_t pw = cfg.extractor.pyramid_width;
  const HeadConfig& h = cfg.heads;
  if (h.mask_res != h.mask_pool && h.mask_res != 2 * h.mask_pool) {
    throw std::invalid_argument("mask_res must equal mask_pool or twice it");
  }
  nn::init_conv(params, "rpn.conv", pw, pw, 3, rng);
  nn::init_conv(params, "rpn.obj", 1, pw, 1, rng);
  nn::init_conv(params, "rpn.delta", 4, pw, 1, rng);
  const auto pool = static_cast<std::size_t>(h.box_pool);
  nn::init_fc(params, "box.fc1", h.box_hidden, pw * pool * pool, rng);
  nn::init_fc(params, "box.fc2", h.box_hidden, h.box_hidden, rng);
  nn::init_fc(params, "box.cls", h.classes, h.box_hidden, rng);
  nn::init_fc(params, "box.delta", 4 * h.classes, h.box_hidden, rng);
  std::size_t in = pw;
  for (int i = 1; i <= 4; ++i) {
    nn::init_conv(params, "mask.conv" + std::to_string(i), h.mask_width, in, 3, rng);
    in = h.mask_width;
  }
  nn::init_conv(params, "mask.out", h.classes, h.mask_width, 1, rng);
}

ParamSet<float> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ParamSet<float> params;
  Rng rng(seed);
  init_extractor(params, cfg.extractor, rng);
  init_heads(params, cfg, rng);
  return params;
}

template <typename T>
RpnVars rpn_head(ParamBinder<T>& p, const LevelVars& pyramid) {
  RpnVars out;
  for (std::size_t k = 0; k < kLevels; ++k) {
    const Var h = nn::conv_relu(p, "rpn.conv", pyramid[k]);
    out.objectness[k] = nn::conv(p, "rpn.obj", h);
    out.deltas[k] = nn::conv(p, "rpn.delta", h);
  }
  return out;
}

template <typename T>
std::pair<Var, Var> box_head(ParamBinder<T>& p, Var roi_features) {
  Tape<T>& t = p.tape();
  const Var h1 = ops::relu(t, nn::fc(p, "box.fc1", roi_features));
  const Var h2 = ops::relu(t, nn::fc(p, "box.fc2", h1));
  return {nn::fc(p, "box.cls", h2), nn::fc(p, "box.delta", h2)};
}

template <typename T>
Var mask_head(ParamBinder<T>& p, Var roi_features, const HeadConfig& cfg) {
  Var x = roi_features;
  for (int i = 1; i <= 4; ++i) x = nn::conv_relu(p, "mask.conv" + std::to_string(i), x);
  if (cfg.mask_res == 2 * cfg.mask_pool) x = ops::upsample2x_nearest(p.tape(), x);
  return nn::conv(p, "mask.out", x);
}

AnchorGrid anchors_for(const Shape& image, const DetectConfig& cfg) {
  std::array<std::pair<std::size_t, std::size_t>, kLevels> dims;
  std::array<int, kLevels> strides = kLevelStrides;
  for (std::size_t k = 0; k < kLevels; ++k) dims[k] = {image.h / strides[k], image.w / strides[k]};
  return generate_anchors(dims, cfg.anchor_sizes, strides);
}

Box mask_region(const Box& b, double margin) { return {b.x, b.y, b.w * (1.0 + margin), b.h * (1.0 + margin)}; }

std::vector<Proposal> propose(const AnchorGrid& anchors, const std::array<Tensor<double>, kLevels>& objectness,
                              const std::array<Tensor<double>, kLevels>& deltas, double width, double height,
                              const DetectConfig& cfg) {
  std::vector<Proposal> all;
  for (std::size_t k = 0; k < kLevels; ++k) {
    const AnchorLevel& lv = anchors.levels[k];
    const Tensor<double>& obj = objectness[k];
    const Tensor<double>& del = deltas[k];
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t i = 0; i < lv.h; ++i) {
      for (std::size_t j = 0; j < lv.w; ++j) {
        const Delta d{del.at(0, 0, i, j), del.at(0, 1, i, j), del.at(0, 2, i, j), del.at(0, 3, i, j)};
        const Box b = clip_box(decode_delta(lv.anchors[i * lv.w + j], d, cfg.normalized_deltas), width, height);
        if (!(b.w >= 1.0 && b.h >= 1.0)) continue;
        boxes.push_back(b);
        scores.push_back(1.0 / (1.0 + std::exp(-obj.at(0, 0, i, j))));
      }
    }
    for (std::size_t idx : nms(boxes, scores, cfg.proposal_nms, cfg.proposals_per_level)) {
      all.push_back({k, boxes[idx], scores[idx]});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  return all;
}

std::string format_proposals(const std::vector<Proposal>& proposals) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (const auto& p : proposals) {
    os << p.level << ' ' << p.box.x << ' ' << p.box.y << ' ' << p.box.w << ' ' << p.box.h << ' ' << p.score << '\n';
  }
  return os.str();
}

namespace {

template <typename T>
std::array<Tensor<double>, kLevels> level_values(const Tape<T>& t, const LevelVars& v) {
  std::array<Tensor<double>, kLevels> out;
  for (std::size_t k = 0; k < kLevels; ++k) out[k] = t.value(v[k]).template cast<double>();
  return out;
}

std::vector<ops::LevelRoi> level_rois(std::span<const Box> boxes, const DetectConfig& cfg) {
  std::vector<ops::LevelRoi> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes) {
    out.push_back({level_for_box(b, cfg.anchor_sizes), {0, b.x0(), b.y0(), b.x1(), b.y1()}});
  }
  return out;
}

const std::array<double, kLevels> kStridesD{4.0, 8.0, 16.0, 32.0};

template <typename T>
Var roi_features(Tape<T>& t, const LevelVars& pyramid, std::span<const Box> boxes, int res, const DetectConfig& cfg) {
  const std::vector<ops::LevelRoi> rois = level_rois(boxes, cfg);
  return ops::roi_align(t, std::span<const Var>(pyramid), std::span<const double>(kStridesD),
                        std::span<const ops::LevelRoi>(rois), res);
}

/// Mask target: nearest image pixel under each mask-cell center.
template <typename T>
void fill_mask_target(const Box& region, const Instance& inst, std::size_t h, std::size_t w, int m, T* out) {
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const double x = region.x0() + (b + 0.5) * region.w / m;
      const double y = region.y0() + (a + 0.5) * region.h / m;
      const double fi = std::floor(y), fj = std::floor(x);
      T v = T(0);
      if (fi >= 0 && fj >= 0 && fi < static_cast<double>(h) && fj < static_cast<double>(w)) {
        v = inst.mask[static_cast<std::size_t>(fi) * w + static_cast<std::size_t>(fj)] ? T(1) : T(0);
      }
      out[a * m + b] = v;
    }
  }
}

std::uint64_t box_signature(std::span<const Box> boxes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const Box& b : boxes) {
    for (double v : {b.x, b.y, b.w, b.h}) {
      h ^= static_cast<std::uint64_t>(std::llround(v * 1024.0));
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

template <typename T>
LossVars training_loss(ParamBinder<T>& p, const Tensor<T>& image, const std::vector<Instance>& gt,
                       const ModelConfig& cfg, const std::vector<Box>* fixed_rois) {
  Tape<T>& t = p.tape();
  const DetectConfig& dc = cfg.detect;
  const Shape& is = image.shape();
  if (is.n != 1) throw ShapeError("training_loss: batch size must be 1, got " + is.str());
  const double W = static_cast<double>(is.w), H = static_cast<double>(is.h);

  const LevelVars pyramid = extract(p, t.constant(image), cfg.extractor);
  const RpnVars rpn = rpn_head(p, pyramid);
  const AnchorGrid grid = anchors_for(is, dc);
  const std::vector<Box> anchors = grid.flat();
  std::vector<Box> gt_boxes;
  for (const auto& g : gt) gt_boxes.push_back(g.box);

  LossVars out;
  LossBreakdown& lb = out.values;
  const Var zero = t.constant(scalar_tensor(T(0)));

  // Objectness over every non-ignored anchor, anchor regression over foreground.
  const MatchLabels match = match_anchors(anchors, gt_boxes, dc.anchor_fg_iou, dc.anchor_bg_iou);
  std::vector<ops::CellRef> obj_cells, fg_cells;
  std::vector<T> obj_targets, delta_targets;
  {
    std::size_t a = 0;
    for (std::size_t k = 0; k < kLevels; ++k) {
      const AnchorLevel& lv = grid.levels[k];
      for (std::size_t i = 0; i < lv.h; ++i) {
        for (std::size_t j = 0; j < lv.w; ++j, ++a) {
          if (match.label[a] == kIgnore) continue;
          obj_cells.push_back({k, 0, i, j});
          obj_targets.push_back(match.label[a] == kForeground ? T(1) : T(0));
          if (match.label[a] != kForeground) continue;
          fg_cells.push_back({k, 0, i, j});
          const Delta d = encode_delta(anchors[a], gt_boxes[static_cast<std::size_t>(match.gt_index[a])],
                                       dc.normalized_deltas);
          for (double v : {d.dx, d.dy, d.dw, d.dh}) delta_targets.push_back(static_cast<T>(v));
        }
      }
    }
  }
  if (obj_cells.empty()) {
    out.objectness = zero;
    lb.objectness_empty = true;
  } else {
    const Var logits = ops::gather_cells(t, std::span<const Var>(rpn.objectness), std::span<const ops::CellRef>(obj_cells));
    out.objectness = ops::bce_with_logits(t, logits, Tensor<T>({obj_cells.size(), 1, 1, 1}, std::move(obj_targets)));
  }
  if (fg_cells.empty()) {
    out.anchor_box = zero;
  } else {
    const Var pred = ops::gather_cells(t, std::span<const Var>(rpn.deltas), std::span<const ops::CellRef>(fg_cells));
    out.anchor_box = ops::smooth_l1_loss(t, pred, Tensor<T>({fg_cells.size(), 4, 1, 1}, std::move(delta_targets)),
                                         dc.smooth_l1_beta);
  }

  // ROI heads.
  out.classification = out.box = out.mask = zero;
  std::vector<Box> rois;
  if (fixed_rois != nullptr) {
    rois = *fixed_rois;
  } else if (!gt.empty()) {
    rois = gt_boxes;
    const std::vector<Proposal> props =
        propose(grid, level_values(t, rpn.objectness), level_values(t, rpn.deltas), W, H, dc);
    for (std::size_t i = 0; i < props.size() && i < dc.train_proposals; ++i) rois.push_back(props[i].box);
    if (t.tracking_kinks()) t.note_kink(box_signature(rois));
  }
  if (!rois.empty()) {
    std::vector<std::size_t> labels(rois.size(), 0);
    std::vector<int> matched(rois.size(), -1);
    for (std::size_t r = 0; r < rois.size(); ++r) {
      double best = 0;
      for (std::size_t g = 0; g < gt.size(); ++g) {
        const double v = iou(rois[r], gt_boxes[g]);
        if (v > best) {
          best = v;
          matched[r] = static_cast<int>(g);
        }
      }
      if (best >= dc.roi_fg_iou) {
        labels[r] = gt[static_cast<std::size_t>(matched[r])].cls;
      } else {
        matched[r] = -1;
      }
    }
    const Var feats = roi_features(t, pyramid, rois, cfg.heads.box_pool, dc);
    const auto [cls_logits, box_deltas] = box_head(p, feats);
    out.classification = ops::softmax_cross_entropy(t, cls_logits, std::span<const std::size_t>(labels));

    std::vector<ops::CellRef> fg_rows;
    std::vector<std::size_t> fg_cls;
    std::vector<T> box_targets;
    std::vector<std::size_t> fg_index;
    for (std::size_t r = 0; r < rois.size(); ++r) {
      if (matched[r] < 0) continue;
      fg_rows.push_back({0, r, 0, 0});
      fg_cls.push_back(labels[r]);
      fg_index.push_back(r);
      const Delta d = encode_delta(rois[r], gt_boxes[static_cast<std::size_t>(matched[r])], dc.normalized_deltas);
      for (double v : {d.dx, d.dy, d.dw, d.dh}) box_targets.push_back(static_cast<T>(v));
    }
    lb.rois = rois.size();
    lb.fg_rois = fg_rows.size();
    if (!fg_rows.empty()) {
      const std::array<Var, 1> src{box_deltas};
      const Var rows = ops::gather_cells(t, std::span<const Var>(src), std::span<const ops::CellRef>(fg_rows));
      const Var sel = ops::select_channel_group(t, rows, std::span<const std::size_t>(fg_cls), 4);
      out.box = ops::smooth_l1_loss(t, sel, Tensor<T>({fg_rows.size(), 4, 1, 1}, std::move(box_targets)),
                                    dc.smooth_l1_beta);

      const std::size_t nm = std::min(fg_index.size(), dc.max_mask_rois);
      const int m = cfg.heads.mask_res;
      std::vector<Box> regions;
      std::vector<std::size_t> mask_cls;
      Tensor<T> target({nm, 1, static_cast<std::size_t>(m), static_cast<std::size_t>(m)});
      for (std::size_t q = 0; q < nm; ++q) {
        const std::size_t r = fg_index[q];
        regions.push_back(mask_region(rois[r], dc.mask_margin));
        mask_cls.push_back(labels[r]);
        fill_mask_target(regions.back(), gt[static_cast<std::size_t>(matched[r])], is.h, is.w, m,
                         target.plane(q, 0));
      }
      const Var mfeats = roi_features(t, pyramid, regions, cfg.heads.mask_pool, dc);
      const Var logits = mask_head(p, mfeats, cfg.heads);
      const Var chosen = ops::select_channel_group(t, logits, std::span<const std::size_t>(mask_cls), 1);
      out.mask = ops::bce_with_logits(t, chosen, target);
      lb.mask_rois = nm;
    }
  }

  const std::array<Var, 5> terms{out.objectness, out.anchor_box, out.classification, out.box, out.mask};
  out.total = ops::sum_scalars(t, std::span<const Var>(terms));
  lb.objectness = static_cast<double>(t.value(out.objectness)[0]);
  lb.anchor_box = static_cast<double>(t.value(out.anchor_box)[0]);
  lb.classification = static_cast<double>(t.value(out.classification)[0]);
  lb.box = static_cast<double>(t.value(out.box)[0]);
  lb.mask = static_cast<double>(t.value(out.mask)[0]);
  lb.total = static_cast<double>(t.value(out.total)[0]);
  return out;
}

std::vector<Proposal> image_proposals(const ParamSet<float>& params, const Tensor<float>& image,
                                     const ModelConfig& cfg) {
  const Shape& is = image.shape();
  if (is.n != 1) throw ShapeError("image_proposals: batch size must be 1, got " + is.str());
  Tape<float> t;
  ParamBinder<float> p(t, params, false);
  const RpnVars rpn = rpn_head(p, extract(p, t.constant(image), cfg.extractor));
  return propose(anchors_for(is, cfg.detect), level_values(t, rpn.objectness), level_values(t, rpn.deltas),
                 static_cast<double>(is.w), static_cast<double>(is.h), cfg.detect);
}

std::vector<Detection> detect(const ParamSet<float>& params, const Tensor<float>& image, const ModelConfig& cfg) {
  const DetectConfig& dc = cfg.detect;
  const Shape& is = image.shape();
  if (is.n != 1) throw ShapeError("detect: batch size must be 1, got " + is.str());
  const double W = static_cast<double>(is.w), H = static_cast<double>(is.h);
  Tape<float> t;
  ParamBinder<float> p(t, params, false);
  const LevelVars pyramid = extract(p, t.constant(image), cfg.extractor);
  const RpnVars rpn = rpn_head(p, pyramid);
  const AnchorGrid grid = anchors_for(is, dc);
  const std::vector<Proposal> props =
      propose(grid, level_values(t, rpn.objectness), level_values(t, rpn.deltas), W, H, dc);
  std::vector<Box> rois;
  for (std::size_t i = 0; i < props.size() && i < dc.test_proposals; ++i) rois.push_back(props[i].box);
  if (rois.empty()) return {};

  const Var feats = roi_features(t, pyramid, rois, cfg.heads.box_pool, dc);
  const auto [cls_var, delta_var] = box_head(p, feats);
  const Tensor<float> probs = kernels::softmax_channels(t.value(cls_var));
  const Tensor<float>& deltas = t.value(delta_var);
  const std::size_t classes = cfg.heads.classes;

  std::vector<Detection> dets;
  for (std::size_t c = 1; c < classes; ++c) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t r = 0; r < rois.size(); ++r) {
      const double s = probs.at(r, c, 0, 0);
      if (!(s > dc.score_thresh)) continue;
      const Delta d{deltas.at(r, 4 * c, 0, 0), deltas.at(r, 4 * c + 1, 0, 0), deltas.at(r, 4 * c + 2, 0, 0),
                    deltas.at(r, 4 * c + 3, 0, 0)};
      const Box b = clip_box(decode_delta(rois[r], d, dc.normalized_deltas), W, H);
      if (!(b.w >= 1.0 && b.h >= 1.0)) continue;
      boxes.push_back(b);
      scores.push_back(s);
    }
    for (std::size_t idx : nms(boxes, scores, dc.detection_nms, dc.max_detections)) {
      Detection d;
      d.cls = static_cast<std::uint8_t>(c);
      d.score = scores[idx];
      d.box = boxes[idx];
      dets.push_back(std::move(d));
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (dets.size() > dc.max_detections) dets.resize(dc.max_detections);
  if (dets.empty()) return dets;

  std::vector<Box> regions;
  std::vector<std::size_t> cls;
  for (const auto& d : dets) {
    regions.push_back(mask_region(d.box, dc.mask_margin));
    cls.push_back(d.cls);
  }
  const Var mfeats = roi_features(t, pyramid, regions, cfg.heads.mask_pool, dc);
  const Var logits = mask_head(p, mfeats, cfg.heads);
  const Tensor<float> chosen =
      kernels::sigmoid(t.value(ops::select_channel_group(t, logits, std::span<const std::size_t>(cls), 1)));
  const int m = cfg.heads.mask_res;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const float* src = chosen.plane(i, 0);
    dets[i].mask.assign(src, src + m * m);
    dets[i].mask_res = m;
  }
  return dets;
}

LabelMask rasterize(const std::vector<Detection>& dets, std::size_t h, std::size_t w, double mask_margin) {
  LabelMask out(h, w);
  std::vector<double> best(h * w, -1.0);
  for (const auto& d : dets) {
    const int m = d.mask_res;
    if (m <= 0 || d.mask.size() != static_cast<std::size_t>(m * m)) continue;
    const Box region = mask_region(d.box, mask_margin);
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor(region.y0())));
    const auto j0 = static_cast<std::size_t>(std::max(0.0, std::floor(region.x0())));
    const auto i1 = static_cast<std::size_t>(std::clamp(std::ceil(region.y1()), 0.0, static_cast<double>(h)));
    const auto j1 = static_cast<std::size_t>(std::clamp(std::ceil(region.x1()), 0.0, static_cast<double>(w)));
    for (std::size_t i = i0; i < i1; ++i) {
      for (std::size_t j = j0; j < j1; ++j) {
        const double u = (static_cast<double>(j) + 0.5 - region.x0()) / region.w * m - 0.5;
        const double v = (static_cast<double>(i) + 0.5 - region.y0()) / region.h * m - 0.5;
        if (u < -0.5 || v < -0.5 || u > m - 0.5 || v > m - 0.5) continue;
        const double uc = std::clamp(u, 0.0, m - 1.0), vc = std::clamp(v, 0.0, m - 1.0);
        const int a0 = static_cast<int>(vc), b0 = static_cast<int>(uc);
        const int a1 = std::min(a0 + 1, m - 1), b1 = std::min(b0 + 1, m - 1);
        const double fy = vc - a0, fx = uc - b0;
        const double prob = (1 - fy) * ((1 - fx) * d.mask[a0 * m + b0] + fx * d.mask[a0 * m + b1]) +
                            fy * ((1 - fx) * d.mask[a1 * m + b0] + fx * d.mask[a1 * m + b1]);
        if (prob > 0.5 && d.score > best[i * w + j]) {
          best[i * w + j] = d.score;
          out.at(i, j) = d.cls;
        }
      }
    }
  }
  return out;
}

LabelMask predict_mask(const ParamSet<float>& params, const Image& image, const ModelConfig& cfg) {
  return rasterize(detect(params, image_tensor(image), cfg), image.h, image.w, cfg.detect.mask_margin);
}

template RpnVars rpn_head(ParamBinder<float>&, const LevelVars&);
template RpnVars rpn_head(ParamBinder<double>&, const LevelVars&);
template std::pair<Var, Var> box_head(ParamBinder<float>&, Var);
template std::pair<Var, Var> box_head(ParamBinder<double>&, Var);
template Var mask_head(ParamBinder<float>&, Var, const HeadConfig&);
template Var mask_head(ParamBinder<double>&, Var, const HeadConfig&);
template LossVars training_loss(ParamBinder<float>&, const Tensor<float>&, const std::vector<Instance>&,
                                const ModelConfig&, const std::vector<Box>*);
template LossVars training_loss(ParamBinder<double>&, const Tensor<double>&, const std::vector<Instance>&,
                                const ModelConfig&, const std::vector<Box>*);

}  // namespace fpnsrnn
