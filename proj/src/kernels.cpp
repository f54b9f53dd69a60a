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

#include "fpnsrnn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace fpnsrnn::kernels {

namespace {

using i64 = std::int64_t;

i64 floor_div(i64 a, i64 b) {
  i64 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

i64 ceil_div(i64 a, i64 b) { return -floor_div(-a, b); }

// Output index range [lo, hi) whose tap `k` lands inside [0, extent).
struct TapRange {
  i64 lo;
  i64 hi;
};

TapRange tap_range(i64 extent, i64 out_extent, i64 stride, i64 pad, i64 k) {
  const i64 lo = std::max<i64>(0, ceil_div(pad - k, stride));
  const i64 hi = std::min<i64>(out_extent, floor_div(extent - 1 + pad - k, stride) + 1);
  return {lo, std::max(lo, hi)};
}

void check_conv(const Shape& x, const Shape& w, const Shape& b, int stride) {
  if (w.h != w.w || w.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square and odd, got " + w.str());
  }
  if (x.c != w.c) {
    throw ShapeError("conv2d: input channels " + x.str() + " do not match kernel " + w.str());
  }
  if (b.numel() != w.n) {
    throw ShapeError("conv2d: bias " + b.str() + " does not match kernel " + w.str());
  }
  if (stride != 1 && stride != 2) {
    throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  }
}

}  // namespace

namespace {

// Unfolds one batch item into rows r = (ci, ky, kx) of length Ho * Wo, zero
// where the tap falls in the padding.
template <typename T>
void unfold(const T* in, i64 C, i64 H, i64 W, i64 k, i64 s, i64 Ho, i64 Wo, T* cols) {
  const i64 pad = (k - 1) / 2, rows = C * k * k, hw = Ho * Wo;
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const i64 ci = r / (k * k), ky = (r / k) % k, kx = r % k;
    const T* plane = in + ci * H * W;
    T* dst = cols + r * hw;
    std::fill(dst, dst + hw, T(0));
    const TapRange ry = tap_range(H, Ho, s, pad, ky), rx = tap_range(W, Wo, s, pad, kx);
    for (i64 oy = ry.lo; oy < ry.hi; ++oy) {
      const T* irow = plane + (oy * s - pad + ky) * W;
      for (i64 ox = rx.lo; ox < rx.hi; ++ox) dst[oy * Wo + ox] = irow[ox * s - pad + kx];
    }
  }
}

bool is_pointwise(i64 k, i64 s) { return k == 1 && s == 1; }

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  check_conv(xs, ws, b.shape(), stride);
  const i64 k = static_cast<i64>(ws.h), s = stride;
  const i64 H = static_cast<i64>(xs.h), W = static_cast<i64>(xs.w);
  const i64 Ho = (H + s - 1) / s, Wo = (W + s - 1) / s, hw = Ho * Wo;
  const i64 rows = static_cast<i64>(ws.c) * k * k, cout = static_cast<i64>(ws.n);
  Tensor<T> y(Shape{xs.n, ws.n, static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
  const bool direct = is_pointwise(k, s);
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(rows * hw));

  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* src = x.plane(n, 0);
    if (!direct) {
      unfold(src, static_cast<i64>(xs.c), H, W, k, s, Ho, Wo, cols.data());
      src = cols.data();
    }
    // Four output channels per task share each unfolded row; every output
    // still accumulates its taps in row order.
    const i64 blocks = (cout + 3) / 4;
#pragma omp parallel for schedule(static)
    for (i64 blk = 0; blk < blocks; ++blk) {
      const i64 co0 = blk * 4, nco = std::min<i64>(4, cout - co0);
      T* out[4];
      const T* wr[4];
      for (i64 q = 0; q < 4; ++q) {
        const i64 co = co0 + std::min(q, nco - 1);
        out[q] = y.plane(n, static_cast<std::size_t>(co));
        wr[q] = w.ptr() + co * rows;
      }
      for (i64 q = 0; q < nco; ++q) std::fill(out[q], out[q] + hw, b[static_cast<std::size_t>(co0 + q)]);
      if (nco == 4) {
        for (i64 r = 0; r < rows; ++r) {
          const T w0 = wr[0][r], w1 = wr[1][r], w2 = wr[2][r], w3 = wr[3][r];
          const T* c = src + r * hw;
          T *o0 = out[0], *o1 = out[1], *o2 = out[2], *o3 = out[3];
          for (i64 p = 0; p < hw; ++p) {
            const T v = c[p];
            o0[p] += w0 * v;
            o1[p] += w1 * v;
            o2[p] += w2 * v;
            o3[p] += w3 * v;
          }
        }
      } else {
        for (i64 q = 0; q < nco; ++q) {
          for (i64 r = 0; r < rows; ++r) {
            const T wv = wr[q][r];
            const T* c = src + r * hw;
            for (i64 p = 0; p < hw; ++p) out[q][p] += wv * c[p];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride,
                     Tensor<T>* gx, Tensor<T>* gw, Tensor<T>* gb) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const i64 k = static_cast<i64>(ws.h), pad = (k - 1) / 2, s = stride;
  const i64 H = static_cast<i64>(xs.h), W = static_cast<i64>(xs.w);
  const i64 Ho = static_cast<i64>(gy.shape().h), Wo = static_cast<i64>(gy.shape().w), hw = Ho * Wo;
  const i64 rows = static_cast<i64>(ws.c) * k * k, cout = static_cast<i64>(ws.n);
  const i64 kk = k * k;
  const bool direct = is_pointwise(k, s);

  if (gx != nullptr) {
#ifdef FPNSRNN_MUTATE_CONV_BACKWARD
    const T sign = T(-1);
#else
    const T sign = T(1);
#endif
    const i64 cin = static_cast<i64>(xs.c);
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* go = gy.plane(n, 0);
#pragma omp parallel
      {
        std::vector<T> gcol(static_cast<std::size_t>(hw));
#pragma omp for schedule(static)
        for (i64 ci = 0; ci < cin; ++ci) {
          T* g = gx->plane(n, static_cast<std::size_t>(ci));
          for (i64 t = 0; t < kk; ++t) {
            const i64 r = ci * kk + t;
            std::fill(gcol.begin(), gcol.end(), T(0));
            for (i64 co = 0; co < cout; ++co) {
              const T wv = sign * w[static_cast<std::size_t>(co * rows + r)];
              const T* orow = go + co * hw;
              for (i64 p = 0; p < hw; ++p) gcol[p] += wv * orow[p];
            }
            if (direct) {
              for (i64 p = 0; p < hw; ++p) g[p] += gcol[p];
              continue;
            }
            const i64 ky = t / k, kx = t % k;
            const TapRange ry = tap_range(H, Ho, s, pad, ky), rx = tap_range(W, Wo, s, pad, kx);
            for (i64 oy = ry.lo; oy < ry.hi; ++oy) {
              T* grow = g + (oy * s - pad + ky) * W;
              for (i64 ox = rx.lo; ox < rx.hi; ++ox) grow[ox * s - pad + kx] += gcol[oy * Wo + ox];
            }
          }
        }
      }
    }
  }

  if (gw != nullptr) {
    // Position-major unfolded input so the per-position update runs over
    // contiguous kernel taps.
    std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(rows * hw));
    std::vector<T> colsT(static_cast<std::size_t>(rows * hw));
    for (std::size_t n = 0; n < xs.n; ++n) {
      const T* src = x.plane(n, 0);
      if (!direct) {
        unfold(src, static_cast<i64>(xs.c), H, W, k, s, Ho, Wo, cols.data());
        src = cols.data();
      }
#pragma omp parallel for schedule(static)
      for (i64 p = 0; p < hw; ++p) {
        for (i64 r = 0; r < rows; ++r) colsT[p * rows + r] = src[r * hw + p];
      }
      const T* go = gy.plane(n, 0);
#pragma omp parallel for schedule(static)
      for (i64 co = 0; co < cout; ++co) {
        T* gk = gw->ptr() + co * rows;
        const T* orow = go + co * hw;
        for (i64 p = 0; p < hw; ++p) {
          const T g = orow[p];
          const T* c = colsT.data() + p * rows;
          for (i64 r = 0; r < rows; ++r) gk[r] += g * c[r];
        }
      }
    }
  }

  if (gb != nullptr) {
    for (std::size_t co = 0; co < ws.n; ++co) {
      T acc = (*gb)[co];
      for (std::size_t n = 0; n < xs.n; ++n) {
        const T* go = gy.plane(n, co);
        for (i64 i = 0; i < hw; ++i) acc += go[i];
      }
      (*gb)[co] = acc;
    }
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const i64 n = static_cast<i64>(x.numel());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
  const i64 n = static_cast<i64>(x.numel());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) {
    if (x[i] > T(0)) gx[i] += gy[i];
  }
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const i64 n = static_cast<i64>(x.numel());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  return y;
}

template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx) {
  const i64 n = static_cast<i64>(y.numel());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> y(s);
  const std::size_t hw = s.plane();
  const i64 locs = static_cast<i64>(s.n * hw);
#pragma omp parallel for schedule(static)
  for (i64 l = 0; l < locs; ++l) {
    const std::size_t n = static_cast<std::size_t>(l) / hw, p = static_cast<std::size_t>(l) % hw;
    const T* in = x.plane(n, 0) + p;
    T* out = y.plane(n, 0) + p;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < s.c; ++c) mx = std::max(mx, in[c * hw]);
    T sum = 0;
    for (std::size_t c = 0; c < s.c; ++c) {
      out[c * hw] = std::exp(in[c * hw] - mx);
      sum += out[c * hw];
    }
    for (std::size_t c = 0; c < s.c; ++c) out[c * hw] /= sum;
  }
  return y;
}

template <typename T>
void softmax_channels_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx) {
  const Shape& s = y.shape();
  const std::size_t hw = s.plane();
  const i64 locs = static_cast<i64>(s.n * hw);
#pragma omp parallel for schedule(static)
  for (i64 l = 0; l < locs; ++l) {
    const std::size_t n = static_cast<std::size_t>(l) / hw, p = static_cast<std::size_t>(l) % hw;
    const std::size_t base = n * s.c * hw + p;
    T dot = 0;
    for (std::size_t c = 0; c < s.c; ++c) dot += gy[base + c * hw] * y[base + c * hw];
    for (std::size_t c = 0; c < s.c; ++c) gx[base + c * hw] += y[base + c * hw] * (gy[base + c * hw] - dot);
  }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  const i64 n = static_cast<i64>(a.numel());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts[0]->shape();
  std::size_t c = 0;
  for (const Tensor<T>* p : parts) {
    const Shape& s = p->shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("concat_channels: shape mismatch " + s0.str() + " vs " + s.str());
    }
    c += s.c;
  }
  Tensor<T> y(Shape{s0.n, c, s0.h, s0.w});
  const std::size_t hw = s0.plane();
  for (std::size_t n = 0; n < s0.n; ++n) {
    std::size_t off = 0;
    for (const Tensor<T>* p : parts) {
      std::copy_n(p->plane(n, 0), p->shape().c * hw, y.plane(n, off));
      off += p->shape().c;
    }
  }
  return y;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  if (begin + count > s.c) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + s.str());
  }
  Tensor<T> y(Shape{s.n, count, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) std::copy_n(x.plane(n, begin), count * s.plane(), y.plane(n, 0));
  return y;
}

template <typename T>
void slice_channels_backward(const Tensor<T>& gy, std::size_t begin, Tensor<T>& gx) {
  const Shape& s = gy.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* src = gy.plane(n, 0);
    T* dst = gx.plane(n, begin);
    for (std::size_t i = 0; i < s.c * s.plane(); ++i) dst[i] += src[i];
  }
}

template <typename T>
Tensor<T> upsample2x_nearest(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> y(Shape{s.n, s.c, s.h * 2, s.w * 2});
  const i64 rows = static_cast<i64>(s.n * s.c * s.h * 2);
  const std::size_t wo = s.w * 2;
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const std::size_t plane = static_cast<std::size_t>(r) / (s.h * 2);
    const std::size_t oy = static_cast<std::size_t>(r) % (s.h * 2);
    const T* in = x.ptr() + plane * s.plane() + (oy / 2) * s.w;
    T* out = y.ptr() + plane * s.plane() * 4 + oy * wo;
    for (std::size_t ox = 0; ox < wo; ++ox) out[ox] = in[ox / 2];
  }
  return y;
}

template <typename T>
void upsample2x_nearest_backward(const Tensor<T>& gy, Tensor<T>& gx) {
  const Shape& s = gx.shape();
  const i64 rows = static_cast<i64>(s.n * s.c * s.h);
  const std::size_t wo = s.w * 2;
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const std::size_t plane = static_cast<std::size_t>(r) / s.h;
    const std::size_t iy = static_cast<std::size_t>(r) % s.h;
    const T* g0 = gy.ptr() + plane * s.plane() * 4 + (2 * iy) * wo;
    const T* g1 = g0 + wo;
    T* out = gx.ptr() + plane * s.plane() + iy * s.w;
    for (std::size_t ix = 0; ix < s.w; ++ix) {
      out[ix] += g0[2 * ix] + g0[2 * ix + 1] + g1[2 * ix] + g1[2 * ix + 1];
    }
  }
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("maxpool2x2: odd spatial dims " + s.str());
  Tensor<T> y(Shape{s.n, s.c, s.h / 2, s.w / 2});
  if (argmax != nullptr) argmax->assign(y.numel(), 0);
  const i64 planes = static_cast<i64>(s.n * s.c);
  const std::size_t ho = s.h / 2, wo = s.w / 2;
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const std::size_t ibase = static_cast<std::size_t>(p) * s.plane();
    const std::size_t obase = static_cast<std::size_t>(p) * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = ibase + 2 * oy * s.w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ibase + (2 * oy + dy) * s.w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        y[obase + oy * wo + ox] = x[best];
        if (argmax != nullptr) (*argmax)[obase + oy * wo + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return y;
}

template <typename T>
void maxpool2x2_backward(const std::vector<std::uint32_t>& argmax, const Tensor<T>& gy, Tensor<T>& gx) {
  // Each input index is the argmax of at most one output window.
  const i64 n = static_cast<i64>(gy.numel());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < n; ++i) gx[argmax[static_cast<std::size_t>(i)]] += gy[i];
}

template <typename T>
Tensor<T> avgpool2x2(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avgpool2x2: odd spatial dims " + s.str());
  Tensor<T> y(Shape{s.n, s.c, s.h / 2, s.w / 2});
  const std::size_t ho = s.h / 2, wo = s.w / 2;
  const i64 planes = static_cast<i64>(s.n * s.c);
#pragma omp parallel for schedule(static)
  for (i64 p = 0; p < planes; ++p) {
    const T* in = x.ptr() + static_cast<std::size_t>(p) * s.plane();
    T* out = y.ptr() + static_cast<std::size_t>(p) * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const T* r0 = in + 2 * oy * s.w + 2 * ox;
        const T* r1 = r0 + s.w;
        out[oy * wo + ox] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
      }
    }
  }
  return y;
}

template <typename T>
void avgpool2x2_backward(const Tensor<T>& gy, Tensor<T>& gx) {
  const Shape& s = gx.shape();
  const std::size_t wo = s.w / 2;
  const i64 rows = static_cast<i64>(s.n * s.c * s.h);
#pragma omp parallel for schedule(static)
  for (i64 r = 0; r < rows; ++r) {
    const std::size_t plane = static_cast<std::size_t>(r) / s.h;
    const std::size_t iy = static_cast<std::size_t>(r) % s.h;
    const T* g = gy.ptr() + plane * (s.plane() / 4) + (iy / 2) * wo;
    T* out = gx.ptr() + plane * s.plane() + iy * s.w;
    for (std::size_t ix = 0; ix < s.w; ++ix) out[ix] += g[ix / 2] * T(0.25);
  }
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t batch = x.shape().n;
  const std::size_t in = x.shape().c * x.shape().plane();
  const std::size_t out = w.shape().n;
  if (w.shape().c * w.shape().plane() != in) {
    throw ShapeError("fully_connected: input " + x.shape().str() + " does not match weights " + w.shape().str());
  }
  if (b.numel() != out) throw ShapeError("fully_connected: bias " + b.shape().str() + " vs " + w.shape().str());
  Tensor<T> y(Shape{batch, out, 1, 1});
  // Input-major weights so each input feature updates all outputs at once;
  // every output still sums its inputs in index order.
  std::vector<T> wt(in * out);
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < static_cast<i64>(in); ++i) {
    for (std::size_t o = 0; o < out; ++o) wt[static_cast<std::size_t>(i) * out + o] = w[o * in + static_cast<std::size_t>(i)];
  }
#pragma omp parallel for schedule(static)
  for (i64 n = 0; n < static_cast<i64>(batch); ++n) {
    const T* xr = x.ptr() + static_cast<std::size_t>(n) * in;
    T* acc = y.ptr() + static_cast<std::size_t>(n) * out;
    for (std::size_t o = 0; o < out; ++o) acc[o] = b[o];
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = xr[i];
      const T* wrow = wt.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) acc[o] += wrow[o] * xv;
    }
  }
  return y;
}

template <typename T>
void fully_connected_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, Tensor<T>* gx,
                              Tensor<T>* gw, Tensor<T>* gb) {
  const std::size_t batch = x.shape().n;
  const std::size_t in = x.shape().c * x.shape().plane();
  const std::size_t out = w.shape().n;
  if (gx != nullptr) {
#pragma omp parallel for schedule(static)
    for (i64 n = 0; n < static_cast<i64>(batch); ++n) {
      T* gr = gx->ptr() + static_cast<std::size_t>(n) * in;
      for (std::size_t o = 0; o < out; ++o) {
        const T g = gy[static_cast<std::size_t>(n) * out + o];
        const T* wr = w.ptr() + o * in;
        for (std::size_t i = 0; i < in; ++i) gr[i] += g * wr[i];
      }
    }
  }
  if (gw != nullptr) {
#pragma omp parallel for schedule(static)
    for (i64 o = 0; o < static_cast<i64>(out); ++o) {
      T* gr = gw->ptr() + static_cast<std::size_t>(o) * in;
      for (std::size_t n = 0; n < batch; ++n) {
        const T g = gy[n * out + static_cast<std::size_t>(o)];
        const T* xr = x.ptr() + n * in;
        for (std::size_t i = 0; i < in; ++i) gr[i] += g * xr[i];
      }
    }
  }
  if (gb != nullptr) {
    for (std::size_t o = 0; o < out; ++o) {
      T acc = (*gb)[o];
      for (std::size_t n = 0; n < batch; ++n) acc += gy[n * out + o];
      (*gb)[o] = acc;
    }
  }
}

template <typename T>
Tensor<T> channel_l2norm_scale(const Tensor<T>& x, const Tensor<T>& gamma) {
  const Shape& s = x.shape();
  if (gamma.numel() != s.c) {
    throw ShapeError("channel_l2norm_scale: gamma " + gamma.shape().str() + " vs input " + s.str());
  }
  Tensor<T> y(s);
  const std::size_t hw = s.plane();
  const i64 locs = static_cast<i64>(s.n * hw);
#pragma omp parallel for schedule(static)
  for (i64 l = 0; l < locs; ++l) {
    const std::size_t n = static_cast<std::size_t>(l) / hw, p = static_cast<std::size_t>(l) % hw;
    const std::size_t base = n * s.c * hw + p;
    T ss = T(kL2NormEps);
    for (std::size_t c = 0; c < s.c; ++c) ss += x[base + c * hw] * x[base + c * hw];
    const T inv = T(1) / std::sqrt(ss);
    for (std::size_t c = 0; c < s.c; ++c) y[base + c * hw] = gamma[c] * x[base + c * hw] * inv;
  }
  return y;
}

template <typename T>
void channel_l2norm_scale_backward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& gy, Tensor<T>* gx,
                                   Tensor<T>* ggamma) {
  const Shape& s = x.shape();
  const std::size_t hw = s.plane();
  const i64 locs = static_cast<i64>(s.n * hw);
  std::vector<T> inv(static_cast<std::size_t>(locs));
#pragma omp parallel for schedule(static)
  for (i64 l = 0; l < locs; ++l) {
    const std::size_t n = static_cast<std::size_t>(l) / hw, p = static_cast<std::size_t>(l) % hw;
    const std::size_t base = n * s.c * hw + p;
    T ss = T(kL2NormEps);
    for (std::size_t c = 0; c < s.c; ++c) ss += x[base + c * hw] * x[base + c * hw];
    inv[static_cast<std::size_t>(l)] = T(1) / std::sqrt(ss);
  }
  if (gx != nullptr) {
#pragma omp parallel for schedule(static)
    for (i64 l = 0; l < locs; ++l) {
      const std::size_t n = static_cast<std::size_t>(l) / hw, p = static_cast<std::size_t>(l) % hw;
      const std::size_t base = n * s.c * hw + p;
      const T iv = inv[static_cast<std::size_t>(l)];
      T dot = 0;
      for (std::size_t c = 0; c < s.c; ++c) dot += gy[base + c * hw] * gamma[c] * x[base + c * hw] * iv;
      for (std::size_t c = 0; c < s.c; ++c) {
        const T u = x[base + c * hw] * iv;
        (*gx)[base + c * hw] += iv * (gy[base + c * hw] * gamma[c] - u * dot);
      }
    }
  }
  if (ggamma != nullptr) {
#pragma omp parallel for schedule(static)
    for (i64 ci = 0; ci < static_cast<i64>(s.c); ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      T acc = (*ggamma)[c];
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* g = gy.plane(n, c);
        const T* xv = x.plane(n, c);
        const T* iv = inv.data() + n * hw;
        for (std::size_t p = 0; p < hw; ++p) acc += g[p] * xv[p] * iv[p];
      }
      (*ggamma)[c] = acc;
    }
  }
}

namespace {

struct Bilinear {
  std::size_t i0, i1, j0, j1;
  double wy0, wy1, wx0, wx1;
};

Bilinear bilinear_at(double y, double x, std::size_t h, std::size_t w) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto i0 = static_cast<std::size_t>(std::floor(y));
  const auto j0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t i1 = std::min(i0 + 1, h - 1), j1 = std::min(j0 + 1, w - 1);
  const double fy = y - static_cast<double>(i0), fx = x - static_cast<double>(j0);
  return {i0, i1, j0, j1, 1.0 - fy, fy, 1.0 - fx, fx};
}

// Feature-map coordinates of sample (a, b) of a res x res grid over the box.
std::pair<double, double> roi_sample(const RoiBox& r, int res, int a, int b, double stride) {
  const double bh = (r.y1 - r.y0) / res, bw = (r.x1 - r.x0) / res;
  const double yi = r.y0 + (a + 0.5) * bh, xi = r.x0 + (b + 0.5) * bw;
  return {yi / stride - 0.5, xi / stride - 0.5};
}

void check_rois(std::span<const RoiBox> rois, std::size_t batch) {
  for (const RoiBox& r : rois) {
    if (!(r.x1 - r.x0 >= 1.0) || !(r.y1 - r.y0 >= 1.0)) {
      throw ShapeError("roi_align: degenerate box (" + std::to_string(r.x0) + ", " + std::to_string(r.y0) + ", " +
                       std::to_string(r.x1) + ", " + std::to_string(r.y1) + ") is smaller than one pixel");
    }
    if (r.batch >= batch) throw ShapeError("roi_align: box batch index out of range");
  }
}

// The four bilinear taps of every sample of every box.
template <typename T>
struct RoiTap {
  std::size_t o00, o01, o10, o11;
  T w00, w01, w10, w11;
};

template <typename T>
std::vector<RoiTap<T>> roi_taps(std::span<const RoiBox> rois, int res, double stride, std::size_t h, std::size_t w) {
  std::vector<RoiTap<T>> taps(rois.size() * static_cast<std::size_t>(res * res));
  std::size_t k = 0;
  for (const RoiBox& roi : rois) {
    for (int a = 0; a < res; ++a) {
      for (int b = 0; b < res; ++b, ++k) {
        const auto [fy, fx] = roi_sample(roi, res, a, b, stride);
        const Bilinear bl = bilinear_at(fy, fx, h, w);
        taps[k] = {bl.i0 * w + bl.j0,
                   bl.i0 * w + bl.j1,
                   bl.i1 * w + bl.j0,
                   bl.i1 * w + bl.j1,
                   static_cast<T>(bl.wy0 * bl.wx0),
                   static_cast<T>(bl.wy0 * bl.wx1),
                   static_cast<T>(bl.wy1 * bl.wx0),
                   static_cast<T>(bl.wy1 * bl.wx1)};
      }
    }
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> roi_align(const Tensor<T>& feat, std::span<const RoiBox> rois, int res, double stride) {
  const Shape& s = feat.shape();
  check_rois(rois, s.n);
  Tensor<T> y(Shape{rois.size(), s.c, static_cast<std::size_t>(res), static_cast<std::size_t>(res)});
  const std::vector<RoiTap<T>> taps = roi_taps<T>(rois, res, stride, s.h, s.w);
  const std::size_t cells = static_cast<std::size_t>(res * res);
  const i64 jobs = static_cast<i64>(rois.size() * s.c);
#pragma omp parallel for schedule(static)
  for (i64 job = 0; job < jobs; ++job) {
    const std::size_t r = static_cast<std::size_t>(job) / s.c, c = static_cast<std::size_t>(job) % s.c;
    const T* in = feat.plane(rois[r].batch, c);
    T* out = y.plane(r, c);
    const RoiTap<T>* tp = taps.data() + r * cells;
    for (std::size_t q = 0; q < cells; ++q) {
      const RoiTap<T>& t = tp[q];
      out[q] = t.w00 * in[t.o00] + t.w01 * in[t.o01] + t.w10 * in[t.o10] + t.w11 * in[t.o11];
    }
  }
  return y;
}

template <typename T>
void roi_align_backward(std::span<const RoiBox> rois, int res, double stride, const Tensor<T>& gy, Tensor<T>& gfeat) {
  const Shape& s = gfeat.shape();
  const i64 chans = static_cast<i64>(s.c);
  const std::vector<RoiTap<T>> taps = roi_taps<T>(rois, res, stride, s.h, s.w);
  const std::size_t cells = static_cast<std::size_t>(res * res);
  // Channel-parallel so that boxes sharing a cell accumulate in box order.
#pragma omp parallel for schedule(static)
  for (i64 ci = 0; ci < chans; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    for (std::size_t r = 0; r < rois.size(); ++r) {
      T* g = gfeat.plane(rois[r].batch, c);
      const T* go = gy.plane(r, c);
      const RoiTap<T>* tp = taps.data() + r * cells;
      for (std::size_t q = 0; q < cells; ++q) {
        const RoiTap<T>& t = tp[q];
        const T v = go[q];
        g[t.o00] += t.w00 * v;
        g[t.o01] += t.w01 * v;
        g[t.o10] += t.w10 * v;
        g[t.o11] += t.w11 * v;
      }
    }
  }
}

#define FPNSRNN_INSTANTIATE(T)                                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);                         \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, Tensor<T>*,         \
                                Tensor<T>*, Tensor<T>*);                                                         \
  template Tensor<T> relu(const Tensor<T>&);                                                                     \
  template void relu_backward(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                  \
  template void sigmoid_backward(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                                \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                                         \
  template void softmax_channels_backward(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                    \
  template Tensor<T> concat_channels(std::span<const Tensor<T>* const>);                                         \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                                 \
  template void slice_channels_backward(const Tensor<T>&, std::size_t, Tensor<T>&);                              \
  template Tensor<T> upsample2x_nearest(const Tensor<T>&);                                                       \
  template void upsample2x_nearest_backward(const Tensor<T>&, Tensor<T>&);                                       \
  template Tensor<T> maxpool2x2(const Tensor<T>&, std::vector<std::uint32_t>*);                                  \
  template void maxpool2x2_backward(const std::vector<std::uint32_t>&, const Tensor<T>&, Tensor<T>&);            \
  template Tensor<T> avgpool2x2(const Tensor<T>&);                                                               \
  template void avgpool2x2_backward(const Tensor<T>&, Tensor<T>&);                                               \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template void fully_connected_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,       \
                                         Tensor<T>*, Tensor<T>*);                                                \
  template Tensor<T> channel_l2norm_scale(const Tensor<T>&, const Tensor<T>&);                                   \
  template void channel_l2norm_scale_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,  \
                                              Tensor<T>*);                                                       \
  template Tensor<T> roi_align(const Tensor<T>&, std::span<const RoiBox>, int, double);                          \
  template void roi_align_backward(std::span<const RoiBox>, int, double, const Tensor<T>&, Tensor<T>&);

FPNSRNN_INSTANTIATE(float)
FPNSRNN_INSTANTIATE(double)
#undef FPNSRNN_INSTANTIATE

}  // namespace fpnsrnn::kernels
