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
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "fpnsrnn/tensor.hpp"

namespace fpnsrnn {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

// Tensor archive layout: "TNS4", u8 dtype tag, four little-endian u32 dims
// (n, c, h, w), then numel little-endian values of that dtype.
template <typename T>
std::vector<std::uint8_t> encode_archive(const Tensor<T>& t);

/// Decodes either dtype and converts to T.
template <typename T>
Tensor<T> decode_archive(std::span<const std::uint8_t> bytes);

template <typename T>
void write_archive(const std::filesystem::path& path, const Tensor<T>& t);

template <typename T>
Tensor<T> read_archive(const std::filesystem::path& path);

/// FNV-1a 64-bit digest, used for byte-stability checks.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace fpnsrnn
