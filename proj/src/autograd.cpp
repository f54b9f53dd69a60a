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

#include "fpnsrnn/autograd.hpp"

namespace fpnsrnn {

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::record(const char* op, Tensor<T> value, std::span<const Var> inputs, Backward backward) {
  if (checked_mode() && !value.all_finite()) {
    throw NumericError(std::string("op '") + op + "' produced non-finite values");
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (Var v : inputs) {
    if (v.valid() && requires_grad(v)) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (value(root).numel() != 1) {
    throw ShapeError("backward: root must hold a single element, got " + value(root).shape().str());
  }
  grad_buffer(root)[0] += T(1);
  for (std::int32_t id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.empty()) continue;
    if (!n.grad.all_finite()) {
      throw NumericError(std::string("non-finite gradient reaching op '") + n.op + "'");
    }
    // The closure only touches input nodes (lower ids), so this reference is stable.
    n.backward(*this, n.grad, n.value);
  }
}

template <typename T>
Var ParamBinder<T>::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  Var v = tape_.leaf(it->second, requires_grad_);
  bound_.emplace(name, v);
  return v;
}

template <typename T>
ParamSet<T> ParamBinder<T>::grads() const {
  ParamSet<T> out;
  for (const auto& [name, v] : bound_) {
    const Tensor<T>& g = tape_.grad(v);
    out.emplace(name, g.empty() ? Tensor<T>(tape_.value(v).shape()) : g);
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;
template class ParamBinder<float>;
template class ParamBinder<double>;

}  // namespace fpnsrnn
