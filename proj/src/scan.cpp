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

#include "fpnsrnn/scan.hpp"

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace fpnsrnn {

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::Right: return "right";
    case Direction::Left: return "left";
    case Direction::Down: return "down";
    case Direction::Up: return "up";
  }
  return "?";
}

namespace {

using i64 = std::int64_t;

// One scan line inside a single (n, :) block: flat plane offset of step t is
// start + t * step.
struct LineGeometry {
  std::size_t lines_per_item;
  std::size_t length;
  i64 step;

  i64 start(std::size_t line) const;
  std::size_t h, w;
  Direction dir;
};

i64 LineGeometry::start(std::size_t line) const {
  switch (dir) {
    case Direction::Right: return static_cast<i64>(line * w);
    case Direction::Left: return static_cast<i64>(line * w + (w - 1));
    case Direction::Down: return static_cast<i64>(line);
    case Direction::Up: return static_cast<i64>((h - 1) * w + line);
  }
  return 0;
}

LineGeometry geometry(const Shape& s, Direction dir) {
  const bool horizontal = dir == Direction::Right || dir == Direction::Left;
  LineGeometry g{};
  g.h = s.h;
  g.w = s.w;
  g.dir = dir;
  g.lines_per_item = horizontal ? s.h : s.w;
  g.length = horizontal ? s.w : s.h;
  switch (dir) {
    case Direction::Right: g.step = 1; break;
    case Direction::Left: g.step = -1; break;
    case Direction::Down: g.step = static_cast<i64>(s.w); break;
    case Direction::Up: g.step = -static_cast<i64>(s.w); break;
  }
  return g;
}

template <typename T>
void check_scan(const Tensor<T>& x, const Tensor<T>& whh) {
  const Shape& w = whh.shape();
  if (w.n != w.c || w.h != 1 || w.w != 1 || w.n != x.shape().c) {
    throw ShapeError("irnn_scan: recurrent matrix " + w.str() + " does not match input " + x.shape().str());
  }
}

}  // namespace

namespace kernels {

template <typename T>
Tensor<T> irnn_scan(const Tensor<T>& x, const Tensor<T>& whh, Direction dir) {
  check_scan(x, whh);
  const Shape& s = x.shape();
  Tensor<T> y(s);
  if (s.numel() == 0) return y;
  const LineGeometry g = geometry(s, dir);
  const std::size_t c = s.c, hw = s.plane();
  const i64 lines = static_cast<i64>(s.n * g.lines_per_item);
  const T* wm = whh.ptr();

#pragma omp parallel
  {
    std::vector<T> prev(c), cur(c);
#pragma omp for schedule(static)
    for (i64 li = 0; li < lines; ++li) {
      const std::size_t n = static_cast<std::size_t>(li) / g.lines_per_item;
      const std::size_t line = static_cast<std::size_t>(li) % g.lines_per_item;
      const T* xb = x.ptr() + n * c * hw;
      T* yb = y.ptr() + n * c * hw;
      std::fill(prev.begin(), prev.end(), T(0));
      i64 pos = g.start(line);
      for (std::size_t t = 0; t < g.length; ++t, pos += g.step) {
        for (std::size_t o = 0; o < c; ++o) {
          T acc = xb[o * hw + static_cast<std::size_t>(pos)];
          const T* wr = wm + o * c;
          for (std::size_t i = 0; i < c; ++i) acc += wr[i] * prev[i];
          cur[o] = acc > T(0) ? acc : T(0);
          yb[o * hw + static_cast<std::size_t>(pos)] = cur[o];
        }
        prev.swap(cur);
      }
    }
  }
  return y;
}

template <typename T>
void irnn_scan_backward(const Tensor<T>& states, const Tensor<T>& whh, const Tensor<T>& gy, Direction dir,
                        Tensor<T>* gx, Tensor<T>* gwhh) {
  const Shape& s = states.shape();
  if (s.numel() == 0) return;
  const LineGeometry g = geometry(s, dir);
  const std::size_t c = s.c, hw = s.plane();
  const i64 lines = static_cast<i64>(s.n * g.lines_per_item);
  const T* wm = whh.ptr();
  // Gradient w.r.t. the pre-activation at every position.
  Tensor<T> gpre(s);

#pragma omp parallel
  {
    std::vector<T> carry(c), gp(c);
#pragma omp for schedule(static)
    for (i64 li = 0; li < lines; ++li) {
      const std::size_t n = static_cast<std::size_t>(li) / g.lines_per_item;
      const std::size_t line = static_cast<std::size_t>(li) % g.lines_per_item;
      const std::size_t base = n * c * hw;
      std::fill(carry.begin(), carry.end(), T(0));
      i64 pos = g.start(line) + static_cast<i64>(g.length - 1) * g.step;
      for (std::size_t t = g.length; t-- > 0; pos -= g.step) {
        const std::size_t p = base + static_cast<std::size_t>(pos);
        for (std::size_t o = 0; o < c; ++o) {
          const T gh = gy[p + o * hw] + carry[o];
          gp[o] = states[p + o * hw] > T(0) ? gh : T(0);
          gpre[p + o * hw] = gp[o];
        }
        for (std::size_t i = 0; i < c; ++i) carry[i] = T(0);
        for (std::size_t o = 0; o < c; ++o) {
          const T v = gp[o];
          if (v == T(0)) continue;
          const T* wr = wm + o * c;
          for (std::size_t i = 0; i < c; ++i) carry[i] += wr[i] * v;
        }
      }
    }
  }

  if (gx != nullptr) {
    const i64 n = static_cast<i64>(s.numel());
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) (*gx)[static_cast<std::size_t>(i)] += gpre[static_cast<std::size_t>(i)];
  }

  if (gwhh != nullptr) {
#pragma omp parallel for schedule(static)
    for (i64 oi = 0; oi < static_cast<i64>(c); ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      T* gr = gwhh->ptr() + o * c;
      for (i64 li = 0; li < lines; ++li) {
        const std::size_t n = static_cast<std::size_t>(li) / g.lines_per_item;
        const std::size_t line = static_cast<std::size_t>(li) % g.lines_per_item;
        const std::size_t base = n * c * hw;
        i64 pos = g.start(line) + g.step;
        for (std::size_t t = 1; t < g.length; ++t, pos += g.step) {
          const T v = gpre[base + o * hw + static_cast<std::size_t>(pos)];
          if (v == T(0)) continue;
          const std::size_t prev = base + static_cast<std::size_t>(pos - g.step);
          for (std::size_t i = 0; i < c; ++i) gr[i] += v * states[prev + i * hw];
        }
      }
    }
  }
}

template Tensor<float> irnn_scan(const Tensor<float>&, const Tensor<float>&, Direction);
template Tensor<double> irnn_scan(const Tensor<double>&, const Tensor<double>&, Direction);
template void irnn_scan_backward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, Direction,
                                 Tensor<float>*, Tensor<float>*);
template void irnn_scan_backward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, Direction,
                                 Tensor<double>*, Tensor<double>*);

}  // namespace kernels

namespace reference {

template <typename T>
Tensor<T> irnn_scan(const Tensor<T>& x, const Tensor<T>& whh, Direction dir) {
  check_scan(x, whh);
  const Shape& s = x.shape();
  Tensor<T> y(s);
  const bool horizontal = dir == Direction::Right || dir == Direction::Left;
  const bool forward = dir == Direction::Right || dir == Direction::Down;
  const std::size_t lines = horizontal ? s.h : s.w;
  const std::size_t len = horizontal ? s.w : s.h;
  auto coords = [&](std::size_t line, std::size_t t) {
    const std::size_t along = forward ? t : len - 1 - t;
    return horizontal ? std::pair{line, along} : std::pair{along, line};
  };
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t line = 0; line < lines; ++line) {
      std::vector<T> h(s.c, T(0));
      for (std::size_t t = 0; t < len; ++t) {
        const auto [i, j] = coords(line, t);
        std::vector<T> next(s.c);
        for (std::size_t o = 0; o < s.c; ++o) {
          T acc = x.at(n, o, i, j);
          for (std::size_t k = 0; k < s.c; ++k) acc += whh.at(o, k, 0, 0) * h[k];
          next[o] = acc > T(0) ? acc : T(0);
          y.at(n, o, i, j) = next[o];
        }
        h = std::move(next);
      }
    }
  }
  return y;
}

template Tensor<float> irnn_scan(const Tensor<float>&, const Tensor<float>&, Direction);
template Tensor<double> irnn_scan(const Tensor<double>&, const Tensor<double>&, Direction);

}  // namespace reference

}  // namespace fpnsrnn
