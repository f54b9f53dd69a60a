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

#include "fpnsrnn/ops.hpp"

#include <memory>

namespace fpnsrnn::ops {

namespace {

template <typename T>
void note_positive_mask(Tape<T>& t, const Tensor<T>& v) {
  if (!t.tracking_kinks()) return;
  std::uint64_t word = 0;
  std::size_t bits = 0;
  for (std::size_t i = 0; i < v.numel(); ++i) {
    word = (word << 1) | (v[i] > T(0) ? 1u : 0u);
    if (++bits == 64) {
      t.note_kink(word);
      word = 0;
      bits = 0;
    }
  }
  t.note_kink(word ^ bits);
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, int stride) {
  Tensor<T> y = kernels::conv2d(t.value(x), t.value(w), t.value(b), stride);
  return t.record("conv2d", std::move(y), {x, w, b}, [x, w, b, stride](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    kernels::conv2d_backward(tp.value(x), tp.value(w), gy, stride,
                             tp.requires_grad(x) ? &tp.grad_buffer(x) : nullptr,
                             tp.requires_grad(w) ? &tp.grad_buffer(w) : nullptr,
                             tp.requires_grad(b) ? &tp.grad_buffer(b) : nullptr);
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  note_positive_mask(t, t.value(x));
  return t.record("relu", kernels::relu(t.value(x)), {x}, [x](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    kernels::relu_backward(tp.value(x), gy, tp.grad_buffer(x));
  });
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  return t.record("sigmoid", kernels::sigmoid(t.value(x)), {x}, [x](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& y) {
    kernels::sigmoid_backward(y, gy, tp.grad_buffer(x));
  });
}

template <typename T>
Var softmax_channels(Tape<T>& t, Var x) {
  return t.record("softmax_channels", kernels::softmax_channels(t.value(x)), {x},
                  [x](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& y) {
                    kernels::softmax_channels_backward(y, gy, tp.grad_buffer(x));
                  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  return t.record("add", kernels::add(t.value(a), t.value(b)), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      Tensor<T>& g = tp.grad_buffer(v);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& t, Var x, T factor) {
  Tensor<T> y = t.value(x);
  for (T& v : y.vec()) v *= factor;
  return t.record("scale", std::move(y), {x}, [x, factor](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    Tensor<T>& g = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += factor * gy[i];
  });
}

template <typename T>
Var concat_channels(Tape<T>& t, std::span<const Var> parts) {
  std::vector<const Tensor<T>*> ptrs;
  for (Var v : parts) ptrs.push_back(&t.value(v));
  Tensor<T> y = kernels::concat_channels<T>(ptrs);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat_channels", std::move(y), parts, [inputs](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    std::size_t off = 0;
    for (Var v : inputs) {
      const std::size_t c = tp.value(v).shape().c;
      if (tp.requires_grad(v)) kernels::slice_channels_backward(kernels::slice_channels(gy, off, c), 0, tp.grad_buffer(v));
      off += c;
    }
  });
}

template <typename T>
Var slice_channels(Tape<T>& t, Var x, std::size_t begin, std::size_t count) {
  return t.record("slice_channels", kernels::slice_channels(t.value(x), begin, count), {x},
                  [x, begin](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
                    kernels::slice_channels_backward(gy, begin, tp.grad_buffer(x));
                  });
}

template <typename T>
Var upsample2x_nearest(Tape<T>& t, Var x) {
  return t.record("upsample2x_nearest", kernels::upsample2x_nearest(t.value(x)), {x},
                  [x](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
                    kernels::upsample2x_nearest_backward(gy, tp.grad_buffer(x));
                  });
}

template <typename T>
Var maxpool2x2(Tape<T>& t, Var x) {
  auto argmax = std::make_shared<std::vector<std::uint32_t>>();
  Tensor<T> y = kernels::maxpool2x2(t.value(x), argmax.get());
  if (t.tracking_kinks()) {
    for (std::uint32_t a : *argmax) t.note_kink(a);
  }
  return t.record("maxpool2x2", std::move(y), {x}, [x, argmax](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    kernels::maxpool2x2_backward(*argmax, gy, tp.grad_buffer(x));
  });
}

template <typename T>
Var avgpool2x2(Tape<T>& t, Var x) {
  return t.record("avgpool2x2", kernels::avgpool2x2(t.value(x)), {x}, [x](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    kernels::avgpool2x2_backward(gy, tp.grad_buffer(x));
  });
}

template <typename T>
Var fully_connected(Tape<T>& t, Var x, Var w, Var b) {
  return t.record("fully_connected", kernels::fully_connected(t.value(x), t.value(w), t.value(b)), {x, w, b},
                  [x, w, b](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
                    kernels::fully_connected_backward(tp.value(x), tp.value(w), gy,
                                                      tp.requires_grad(x) ? &tp.grad_buffer(x) : nullptr,
                                                      tp.requires_grad(w) ? &tp.grad_buffer(w) : nullptr,
                                                      tp.requires_grad(b) ? &tp.grad_buffer(b) : nullptr);
                  });
}

template <typename T>
Var channel_l2norm_scale(Tape<T>& t, Var x, Var gamma) {
  return t.record("channel_l2norm_scale", kernels::channel_l2norm_scale(t.value(x), t.value(gamma)), {x, gamma},
                  [x, gamma](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
                    kernels::channel_l2norm_scale_backward(
                        tp.value(x), tp.value(gamma), gy, tp.requires_grad(x) ? &tp.grad_buffer(x) : nullptr,
                        tp.requires_grad(gamma) ? &tp.grad_buffer(gamma) : nullptr);
                  });
}

template <typename T>
Var irnn_scan(Tape<T>& t, Var x, Var whh, Direction dir) {
  Tensor<T> states = kernels::irnn_scan(t.value(x), t.value(whh), dir);
  note_positive_mask(t, states);
  return t.record("irnn_scan", std::move(states), {x, whh},
                  [x, whh, dir](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& y) {
                    kernels::irnn_scan_backward(y, tp.value(whh), gy, dir,
                                                tp.requires_grad(x) ? &tp.grad_buffer(x) : nullptr,
                                                tp.requires_grad(whh) ? &tp.grad_buffer(whh) : nullptr);
                  });
}

template <typename T>
Var roi_align(Tape<T>& t, std::span<const Var> levels, std::span<const double> strides,
              std::span<const LevelRoi> rois, int res) {
  if (levels.size() != strides.size()) throw ShapeError("roi_align: levels and strides differ in length");
  if (levels.empty()) throw ShapeError("roi_align: no feature levels");
  const std::size_t c = t.value(levels[0]).shape().c;
  const std::size_t cell = c * static_cast<std::size_t>(res * res);
  Tensor<T> y(Shape{rois.size(), c, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
  // Per level: the boxes routed there and their output rows.
  auto routed = std::make_shared<std::vector<std::pair<std::vector<kernels::RoiBox>, std::vector<std::size_t>>>>(
      levels.size());
  for (std::size_t r = 0; r < rois.size(); ++r) {
    if (rois[r].level >= levels.size()) throw ShapeError("roi_align: roi level out of range");
    (*routed)[rois[r].level].first.push_back(rois[r].box);
    (*routed)[rois[r].level].second.push_back(r);
  }
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& [boxes, rows] = (*routed)[l];
    if (boxes.empty()) continue;
    if (t.value(levels[l]).shape().c != c) throw ShapeError("roi_align: levels differ in channel count");
    Tensor<T> part = kernels::roi_align(t.value(levels[l]), std::span<const kernels::RoiBox>(boxes), res, strides[l]);
    for (std::size_t k = 0; k < rows.size(); ++k) std::copy_n(part.ptr() + k * cell, cell, y.ptr() + rows[k] * cell);
  }
  std::vector<Var> lv(levels.begin(), levels.end());
  std::vector<double> st(strides.begin(), strides.end());
  return t.record("roi_align", std::move(y), levels, [lv, st, routed, res, cell, c](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    for (std::size_t l = 0; l < lv.size(); ++l) {
      const auto& [boxes, rows] = (*routed)[l];
      if (boxes.empty() || !tp.requires_grad(lv[l])) continue;
      Tensor<T> part(Shape{rows.size(), c, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
      for (std::size_t k = 0; k < rows.size(); ++k) std::copy_n(gy.ptr() + rows[k] * cell, cell, part.ptr() + k * cell);
      kernels::roi_align_backward(std::span<const kernels::RoiBox>(boxes), res, st[l], part, tp.grad_buffer(lv[l]));
    }
  });
}

template <typename T>
Var gather_cells(Tape<T>& t, std::span<const Var> levels, std::span<const CellRef> cells) {
  if (levels.empty()) throw ShapeError("gather_cells: no levels");
  const std::size_t c = t.value(levels[0]).shape().c;
  Tensor<T> y(Shape{cells.size(), c, 1, 1});
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const CellRef& r = cells[k];
    if (r.level >= levels.size()) throw ShapeError("gather_cells: level out of range");
    const Tensor<T>& src = t.value(levels[r.level]);
    if (src.shape().c != c) throw ShapeError("gather_cells: levels differ in channel count");
    for (std::size_t ch = 0; ch < c; ++ch) y[k * c + ch] = src.at(r.n, ch, r.y, r.x);
  }
  std::vector<Var> lv(levels.begin(), levels.end());
  std::vector<CellRef> cv(cells.begin(), cells.end());
  return t.record("gather_cells", std::move(y), levels, [lv, cv, c](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    for (std::size_t k = 0; k < cv.size(); ++k) {
      const CellRef& r = cv[k];
      if (!tp.requires_grad(lv[r.level])) continue;
      Tensor<T>& g = tp.grad_buffer(lv[r.level]);
      for (std::size_t ch = 0; ch < c; ++ch) g.at(r.n, ch, r.y, r.x) += gy[k * c + ch];
    }
  });
}

template <typename T>
Var select_channel_group(Tape<T>& t, Var x, std::span<const std::size_t> idx, std::size_t group) {
  const Shape& s = t.value(x).shape();
  if (idx.size() != s.n) throw ShapeError("select_channel_group: index count does not match items " + s.str());
  for (std::size_t i : idx) {
    if ((i + 1) * group > s.c) throw ShapeError("select_channel_group: group index out of range for " + s.str());
  }
  const std::size_t span = group * s.plane();
  Tensor<T> y(Shape{s.n, group, s.h, s.w});
  for (std::size_t r = 0; r < s.n; ++r) std::copy_n(t.value(x).plane(r, idx[r] * group), span, y.plane(r, 0));
  std::vector<std::size_t> iv(idx.begin(), idx.end());
  return t.record("select_channel_group", std::move(y), {x}, [x, iv, group, span](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    Tensor<T>& g = tp.grad_buffer(x);
    for (std::size_t r = 0; r < iv.size(); ++r) {
      T* dst = g.plane(r, iv[r] * group);
      const T* src = gy.plane(r, 0);
      for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var weighted_sum(Tape<T>& t, Var x, const Tensor<T>& weights) {
  require_same_shape(t.value(x).shape(), weights.shape(), "weighted_sum");
  T acc = 0;
  for (std::size_t i = 0; i < weights.numel(); ++i) acc += t.value(x)[i] * weights[i];
  auto wp = std::make_shared<Tensor<T>>(weights);
  return t.record("weighted_sum", scalar_tensor(acc), {x}, [x, wp](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    Tensor<T>& g = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[0] * (*wp)[i];
  });
}

template <typename T>
Var sum_scalars(Tape<T>& t, std::span<const Var> terms) {
  T acc = 0;
  for (Var v : terms) {
    if (t.value(v).numel() != 1) throw ShapeError("sum_scalars: term is not a scalar " + t.value(v).shape().str());
    acc += t.value(v)[0];
  }
  std::vector<Var> tv(terms.begin(), terms.end());
  return t.record("sum_scalars", scalar_tensor(acc), terms, [tv](Tape<T>& tp, const Tensor<T>& gy, const Tensor<T>& /*y*/) {
    for (Var v : tv) {
      if (tp.requires_grad(v)) tp.grad_buffer(v)[0] += gy[0];
    }
  });
}

#define FPNSRNN_INSTANTIATE(T)                                                                                   \
  template Var conv2d(Tape<T>&, Var, Var, Var, int);                                                            \
  template Var relu(Tape<T>&, Var);                                                                              \
  template Var sigmoid(Tape<T>&, Var);                                                                           \
  template Var softmax_channels(Tape<T>&, Var);                                                                  \
  template Var add(Tape<T>&, Var, Var);                                                                          \
  template Var scale(Tape<T>&, Var, T);                                                                          \
  template Var concat_channels(Tape<T>&, std::span<const Var>);                                                  \
  template Var slice_channels(Tape<T>&, Var, std::size_t, std::size_t);                                          \
  template Var upsample2x_nearest(Tape<T>&, Var);                                                                \
  template Var maxpool2x2(Tape<T>&, Var);                                                                        \
  template Var avgpool2x2(Tape<T>&, Var);                                                                        \
  template Var fully_connected(Tape<T>&, Var, Var, Var);                                                         \
  template Var channel_l2norm_scale(Tape<T>&, Var, Var);                                                         \
  template Var irnn_scan(Tape<T>&, Var, Var, Direction);                                                         \
  template Var roi_align(Tape<T>&, std::span<const Var>, std::span<const double>, std::span<const LevelRoi>, int); \
  template Var gather_cells(Tape<T>&, std::span<const Var>, std::span<const CellRef>);                           \
  template Var select_channel_group(Tape<T>&, Var, std::span<const std::size_t>, std::size_t);                   \
  template Var weighted_sum(Tape<T>&, Var, const Tensor<T>&);                                                    \
  template Var sum_scalars(Tape<T>&, std::span<const Var>);

FPNSRNN_INSTANTIATE(float)
FPNSRNN_INSTANTIATE(double)
#undef FPNSRNN_INSTANTIATE

}  // namespace fpnsrnn::ops
