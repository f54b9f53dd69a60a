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
#include <string_view>

#include "fpnsrnn/tensor.hpp"

namespace fpnsrnn {

/// Sweep direction of a recurrent scan. The numeric order is the normative
/// concat order of the four direction outputs.
enum class Direction : int { Right = 0, Left = 1, Down = 2, Up = 3 };

inline constexpr std::array<Direction, 4> kAllDirections{Direction::Right, Direction::Left, Direction::Down,
                                                         Direction::Up};

std::string_view direction_name(Direction d);

namespace kernels {

// IRNN sweep: h_t = max(W_hh h_{t-1} + x_t, 0) along each row (Right/Left) or
// column (Down/Up), with h = 0 before the leading edge. `whh` is (c, c, 1, 1)
// indexed [out][in]. Every line is independent and runs in parallel.
template <typename T>
Tensor<T> irnn_scan(const Tensor<T>& x, const Tensor<T>& whh, Direction dir);

// Reverse-mode of irnn_scan given its output `states`. Accumulates into gx and
// gwhh when non-null.
template <typename T>
void irnn_scan_backward(const Tensor<T>& states, const Tensor<T>& whh, const Tensor<T>& gy, Direction dir,
                        Tensor<T>* gx, Tensor<T>* gwhh);

}  // namespace kernels

namespace reference {

template <typename T>
Tensor<T> irnn_scan(const Tensor<T>& x, const Tensor<T>& whh, Direction dir);

}  // namespace reference

}  // namespace fpnsrnn
