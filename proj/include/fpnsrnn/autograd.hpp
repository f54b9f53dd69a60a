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
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fpnsrnn/tensor.hpp"

namespace fpnsrnn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in execution order, so replaying them
/// backwards is a reverse topological order and touches each node once.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& grad_out, const Tensor<T>& out)>;

  Var leaf(Tensor<T> value, bool requires_grad = true);
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records an op output. The backward closure is dropped when no input
  /// requires a gradient.
  Var record(const char* op, Tensor<T> value, std::span<const Var> inputs, Backward backward);
  Var record(const char* op, Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  const char* op_name(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).op; }

  /// Gradient accumulated so far; empty when nothing reached this node.
  const Tensor<T>& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }
  /// Zero-initialised on first use.
  Tensor<T>& grad_buffer(Var v);

  /// Seeds d(root)/d(root) = 1 for a single-element root and replays the tape.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Kink tracking: ops with piecewise behaviour (ReLU masks, max-pool winners,
  // loss branches) fold their branch choices into a signature so a numeric
  // differentiator can tell when a perturbation crossed a kink.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void note_kink(std::uint64_t v) {
    kink_hash_ ^= v + 0x9e3779b97f4a7c15ull + (kink_hash_ << 6) + (kink_hash_ >> 2);
  }
  std::uint64_t kink_signature() const { return kink_hash_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool track_kinks_ = false;
  std::uint64_t kink_hash_ = 0;
};

/// Named parameter tensors in a stable (sorted) order.
template <typename T>
using ParamSet = std::map<std::string, Tensor<T>>;

template <typename T>
ParamSet<T> cast_params(const ParamSet<float>& p) {
  ParamSet<T> out;
  for (const auto& [k, v] : p) out.emplace(k, v.template cast<T>());
  return out;
}

/// Lazily puts parameters on a tape as leaves and remembers the handles so
/// gradients can be collected after backward.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, const ParamSet<T>& params, bool requires_grad = true)
      : tape_(tape), params_(params), requires_grad_(requires_grad) {}

  Var operator()(const std::string& name);
  /// Uses an existing tape value for `name` instead of the stored tensor.
  void bind(const std::string& name, Var v) { bound_[name] = v; }
  const std::map<std::string, Var>& bound() const { return bound_; }
  Tape<T>& tape() { return tape_; }

  /// Gradients for every bound parameter (zeros where nothing flowed).
  ParamSet<T> grads() const;

 private:
  Tape<T>& tape_;
  const ParamSet<T>& params_;
  bool requires_grad_;
  std::map<std::string, Var> bound_;
};

}  // namespace fpnsrnn
