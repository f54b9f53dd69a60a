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

#include "fpnsrnn/archive.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fpnsrnn {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'T', 'N', 'S', '4'};
constexpr std::size_t kHeaderBytes = 4 + 1 + 4 * 4;

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::F32 : DType::F64;
}

template <typename Src, typename Dst>
void copy_values(std::span<const std::uint8_t> b, std::size_t count, std::vector<Dst>& out) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    Src v;
    std::memcpy(&v, b.data() + kHeaderBytes + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<Dst>(v);
  }
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_archive(const Tensor<T>& t) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + t.numel() * sizeof(T));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
  const Shape& s = t.shape();
  for (std::size_t d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
  const auto* raw = reinterpret_cast<const std::uint8_t*>(t.ptr());
  out.insert(out.end(), raw, raw + t.numel() * sizeof(T));
  return out;
}

template <typename T>
Tensor<T> decode_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw IoError("not a tensor archive (bad magic)");
  }
  const std::uint8_t tag = bytes[4];
  if (tag > 1) throw IoError("tensor archive has unknown dtype tag " + std::to_string(tag));
  Shape s{get_u32(bytes, 5), get_u32(bytes, 9), get_u32(bytes, 13), get_u32(bytes, 17)};
  const std::size_t elem = tag == 0 ? 4 : 8;
  if (bytes.size() != kHeaderBytes + s.numel() * elem) {
    throw IoError("tensor archive payload size does not match dims " + s.str());
  }
  std::vector<T> values;
  if (tag == 0) {
    copy_values<float>(bytes, s.numel(), values);
  } else {
    copy_values<double>(bytes, s.numel(), values);
  }
  return Tensor<T>(s, std::move(values));
}

template <typename T>
void write_archive(const std::filesystem::path& path, const Tensor<T>& t) {
  const auto bytes = encode_archive(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

namespace {
std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}
}  // namespace

template <typename T>
Tensor<T> read_archive(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  try {
    return decode_archive<T>(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t file_digest(const std::filesystem::path& path) { return fnv1a64(slurp(path)); }

template std::vector<std::uint8_t> encode_archive(const Tensor<float>&);
template std::vector<std::uint8_t> encode_archive(const Tensor<double>&);
template Tensor<float> decode_archive(std::span<const std::uint8_t>);
template Tensor<double> decode_archive(std::span<const std::uint8_t>);
template void write_archive(const std::filesystem::path&, const Tensor<float>&);
template void write_archive(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> read_archive(const std::filesystem::path&);
template Tensor<double> read_archive(const std::filesystem::path&);

}  // namespace fpnsrnn
