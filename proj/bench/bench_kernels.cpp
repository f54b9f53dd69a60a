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

#include <benchmark/benchmark.h>

#include "fpnsrnn/kernels.hpp"
#include "fpnsrnn/rng.hpp"
#include "fpnsrnn/scan.hpp"

using namespace fpnsrnn;

namespace {

struct ConvInputs {
  Tensor<float> x, w, b, gy;
};

// Arg 0: spatial extent, arg 1: channels (in = out).
ConvInputs conv_inputs(const benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto ch = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  ConvInputs in{rng.uniform_tensor<float>({1, ch, size, size}, -1, 1), rng.uniform_tensor<float>({ch, ch, 3, 3}, -1, 1),
                rng.uniform_tensor<float>({1, ch, 1, 1}, -1, 1), {}};
  in.gy = rng.uniform_tensor<float>({1, ch, size, size}, -1, 1);
  return in;
}

void conv_args(benchmark::internal::Benchmark* b) {
  for (int threads : {1, 4}) b->Args({32, 32, threads})->Args({64, 16, threads});
}

void BM_Conv2dReference(benchmark::State& state) {
  const ConvInputs in = conv_inputs(state);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d(in.x, in.w, in.b, 1));
}

void BM_Conv2dParallel(benchmark::State& state) {
  set_num_threads(static_cast<int>(state.range(2)));
  const ConvInputs in = conv_inputs(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d(in.x, in.w, in.b, 1));
  set_num_threads(1);
}

void BM_Conv2dBackwardReference(benchmark::State& state) {
  const ConvInputs in = conv_inputs(state);
  for (auto _ : state) {
    Tensor<float> gx(in.x.shape()), gw(in.w.shape()), gb(in.b.shape());
    reference::conv2d_backward(in.x, in.w, in.gy, 1, &gx, &gw, &gb);
    benchmark::DoNotOptimize(gx.ptr());
  }
}

void BM_Conv2dBackwardParallel(benchmark::State& state) {
  set_num_threads(static_cast<int>(state.range(2)));
  const ConvInputs in = conv_inputs(state);
  for (auto _ : state) {
    Tensor<float> gx(in.x.shape()), gw(in.w.shape()), gb(in.b.shape());
    kernels::conv2d_backward(in.x, in.w, in.gy, 1, &gx, &gw, &gb);
    benchmark::DoNotOptimize(gx.ptr());
  }
  set_num_threads(1);
}

struct ScanInputs {
  Tensor<float> x, whh;
};

ScanInputs scan_inputs(const benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto ch = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  ScanInputs in{rng.uniform_tensor<float>({1, ch, size, size}, 0, 1), Tensor<float>({ch, ch, 1, 1})};
  for (std::size_t i = 0; i < ch; ++i) in.whh.at(i, i, 0, 0) = 1.0f;
  return in;
}

void BM_IrnnScanReference(benchmark::State& state) {
  const ScanInputs in = scan_inputs(state);
  for (auto _ : state) benchmark::DoNotOptimize(reference::irnn_scan(in.x, in.whh, Direction::Down));
}

void BM_IrnnScanParallel(benchmark::State& state) {
  set_num_threads(static_cast<int>(state.range(2)));
  const ScanInputs in = scan_inputs(state);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::irnn_scan(in.x, in.whh, Direction::Down));
  set_num_threads(1);
}

}  // namespace

BENCHMARK(BM_Conv2dReference)->Args({32, 32, 1})->Args({64, 16, 1});
BENCHMARK(BM_Conv2dParallel)->Apply(conv_args);
BENCHMARK(BM_Conv2dBackwardReference)->Args({32, 32, 1})->Args({64, 16, 1});
BENCHMARK(BM_Conv2dBackwardParallel)->Apply(conv_args);
BENCHMARK(BM_IrnnScanReference)->Args({32, 32, 1})->Args({64, 16, 1});
BENCHMARK(BM_IrnnScanParallel)->Apply(conv_args);

BENCHMARK_MAIN();
