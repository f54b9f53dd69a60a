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

#include "fpnsrnn/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fpnsrnn/archive.hpp"
#include "fpnsrnn/data.hpp"

namespace fpnsrnn {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace

void save_checkpoint(const fs::path& dir, const ParamSet<float>& params, const RunConfig& cfg) {
  make_dir(dir);
  std::string manifest = "direction_order = right,left,down,up\n";
  for (const auto& [name, t] : params) {
    const std::string file = name + ".tns";
    write_archive(dir / file, t);
    const Shape& s = t.shape();
    manifest += name + " = " + file + " " + std::to_string(s.n) + " " + std::to_string(s.c) + " " +
                std::to_string(s.h) + " " + std::to_string(s.w) + "\n";
  }
  write_text(dir / "manifest.txt", manifest);
  write_text(dir / "model.cfg", format_config(cfg, model_keys()));
}

ParamSet<float> load_checkpoint(const fs::path& dir, RunConfig& cfg) {
  const std::string manifest = read_text(dir / "manifest.txt");
  const fs::path cfg_path = dir / "model.cfg";
  if (fs::exists(cfg_path)) apply_config_text(cfg, read_text(cfg_path));

  ParamSet<float> params;
  std::istringstream in(manifest);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, eq, file;
    ls >> name >> eq;
    if (eq != "=") throw DataError(dir.string() + "/manifest.txt line " + std::to_string(lineno) + ": expected 'name = ...'");
    if (name == "direction_order") {
      std::string order;
      ls >> order;
      if (order != "right,left,down,up") {
        throw DataError(dir.string() + "/manifest.txt: unsupported direction order " + order);
      }
      continue;
    }
    std::size_t n = 0, c = 0, h = 0, w = 0;
    if (!(ls >> file >> n >> c >> h >> w)) {
      throw DataError(dir.string() + "/manifest.txt line " + std::to_string(lineno) + ": expected file and 4 dims");
    }
    Tensor<float> t = read_archive<float>(dir / file);
    if (!(t.shape() == Shape{n, c, h, w})) {
      throw DataError(dir.string() + "/" + file + ": archive shape " + t.shape().str() + " differs from manifest");
    }
    params.emplace(name, std::move(t));
  }
  if (params.empty()) throw DataError(dir.string() + "/manifest.txt lists no tensors");
  return params;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const std::vector<fs::path>& outputs,
                        const RunConfig& cfg) {
  make_dir(dir);
  std::string text = "command = " + command + "\n";
  for (const auto& p : outputs) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, file_digest(p));
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    text += "output = " + fs::relative(p, dir).generic_string() + " " + std::to_string(ec ? 0 : size) + " " + buf + "\n";
  }
  text += "[config]\n" + format_config(cfg, config_keys());
  write_text(dir / "manifest.txt", text);
}

}  // namespace fpnsrnn
