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

namespace fpnsrnn::reference {

namespace {

bool tap(long out, int stride, int pad, int k, std::size_t extent, std::size_t* in) {
  const long v = out * stride - pad + k;
  if (v < 0 || v >= static_cast<long>(extent)) return false;
  *in = static_cast<std::size_t>(v);
  return true;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.c != ws.c) throw ShapeError("reference::conv2d: " + xs.str() + " vs " + ws.str());
  const int k = static_cast<int>(ws.h), pad = (k - 1) / 2;
  const std::size_t ho = (xs.h + stride - 1) / stride, wo = (xs.w + stride - 1) / stride;
  Tensor<T> y(Shape{xs.n, ws.n, ho, wo});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T acc = b[co];
          for (std::size_t ci = 0; ci < ws.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                std::size_t iy, ix;
                if (tap(static_cast<long>(oy), stride, pad, ky, xs.h, &iy) &&
                    tap(static_cast<long>(ox), stride, pad, kx, xs.w, &ix)) {
                  acc += w.at(co, ci, ky, kx) * x.at(n, ci, iy, ix);
                }
              }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, int stride, Tensor<T>* gx,
                     Tensor<T>* gw, Tensor<T>* gb) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const Shape& ys = gy.shape();
  const int k = static_cast<int>(ws.h), pad = (k - 1) / 2;
  if (gx != nullptr) {
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t ci = 0; ci < xs.c; ++ci)
        for (std::size_t iy = 0; iy < xs.h; ++iy)
          for (std::size_t ix = 0; ix < xs.w; ++ix) {
            T& g = gx->at(n, ci, iy, ix);
            for (std::size_t co = 0; co < ws.n; ++co)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const long ny = static_cast<long>(iy) + pad - ky, nx = static_cast<long>(ix) + pad - kx;
                  if (ny < 0 || nx < 0 || ny % stride != 0 || nx % stride != 0) continue;
                  const long oy = ny / stride, ox = nx / stride;
                  if (oy >= static_cast<long>(ys.h) || ox >= static_cast<long>(ys.w)) continue;
                  g += w.at(co, ci, ky, kx) * gy.at(n, co, oy, ox);
                }
          }
  }
  if (gw != nullptr) {
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t ci = 0; ci < ws.c; ++ci)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            T acc = gw->at(co, ci, ky, kx);
            for (std::size_t n = 0; n < xs.n; ++n)
              for (std::size_t oy = 0; oy < ys.h; ++oy)
                for (std::size_t ox = 0; ox < ys.w; ++ox) {
                  std::size_t iy, ix;
                  if (tap(static_cast<long>(oy), stride, pad, ky, xs.h, &iy) &&
                      tap(static_cast<long>(ox), stride, pad, kx, xs.w, &ix)) {
                    acc += gy.at(n, co, oy, ox) * x.at(n, ci, iy, ix);
                  }
                }
            gw->at(co, ci, ky, kx) = acc;
          }
  }
  if (gb != nullptr) {
    for (std::size_t co = 0; co < ws.n; ++co) {
      T acc = (*gb)[co];
      for (std::size_t n = 0; n < ys.n; ++n)
        for (std::size_t i = 0; i < ys.plane(); ++i) acc += gy.plane(n, co)[i];
      (*gb)[co] = acc;
    }
  }
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, int);
template void conv2d_backward(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, int, Tensor<float>*,
                              Tensor<float>*, Tensor<float>*);
template void conv2d_backward(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, int,
                              Tensor<double>*, Tensor<double>*, Tensor<double>*);

}  // namespace fpnsrnn::reference
