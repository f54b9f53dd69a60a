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

#include "fpnsrnn/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace fpnsrnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Setting {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Setting number(T RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); },
          [field](const RunConfig& c) { return fmt(static_cast<double>(c.*field)); }};
}

template <typename T, typename F>
Setting nested_number(F access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_number<T>(k, v); },
          [access](const RunConfig& c) { return fmt(static_cast<double>(access(const_cast<RunConfig&>(c)))); }};
}

template <typename F>
Setting nested_bool(F access) {
  return {[access](RunConfig& c, const std::string& k, const std::string& v) { access(c) = parse_bool(k, v); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

Setting text(std::string RunConfig::*field) {
  return {[field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

const std::map<std::string, Setting>& table() {
  static const std::map<std::string, Setting> t = [] {
    std::map<std::string, Setting> m;
    m["seed"] = number(&RunConfig::seed);
    m["threads"] = number(&RunConfig::threads);
    m["batch_size"] = number(&RunConfig::batch_size);
    m["alpha"] = number(&RunConfig::alpha);
    m["count"] = number(&RunConfig::count);
    m["image_size"] = number(&RunConfig::image_size);
    m["trials"] = number(&RunConfig::trials);
    m["checked"] = nested_bool([](RunConfig& c) -> bool& { return c.checked; });
    m["dataset"] = text(&RunConfig::dataset);
    m["run_dir"] = text(&RunConfig::run_dir);
    m["checkpoint"] = text(&RunConfig::checkpoint);
    m["image"] = text(&RunConfig::image);
    m["mask"] = text(&RunConfig::mask);
    m["output"] = text(&RunConfig::output);
    m["ops"] = text(&RunConfig::ops);
    m["absent_class_policy"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "zero") {
            c.absent_class_policy = AbsentClassPolicy::Zero;
          } else if (v == "skip") {
            c.absent_class_policy = AbsentClassPolicy::Skip;
          } else {
            throw ConfigError("config: " + k + " must be 'zero' or 'skip', got '" + v + "'");
          }
        },
        [](const RunConfig& c) { return std::string(c.absent_class_policy == AbsentClassPolicy::Zero ? "zero" : "skip"); }};

    m["learning_rate"] = nested_number<double>([](RunConfig& c) -> double& { return c.train.learning_rate; });
    m["momentum"] = nested_number<double>([](RunConfig& c) -> double& { return c.train.momentum; });
    m["clip_norm"] = nested_number<double>([](RunConfig& c) -> double& { return c.train.clip_norm; });
    m["max_steps"] = nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.train.steps; });

    m["stem_width"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.extractor.backbone.stem_width; });
    m["stage_widths"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) {
          std::array<std::size_t, kLevels> w{};
          std::istringstream in(v);
          std::string part;
          std::size_t i = 0;
          while (std::getline(in, part, ',')) {
            if (i == kLevels) throw ConfigError("config: " + k + " needs exactly 4 comma-separated widths");
            w[i++] = parse_number<std::size_t>(k, trim(part));
          }
          if (i != kLevels) throw ConfigError("config: " + k + " needs exactly 4 comma-separated widths");
          c.model.extractor.backbone.widths = w;
        },
        [](const RunConfig& c) {
          const auto& w = c.model.extractor.backbone.widths;
          return std::to_string(w[0]) + "," + std::to_string(w[1]) + "," + std::to_string(w[2]) + "," +
                 std::to_string(w[3]);
        }};
    m["pyramid_width"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.extractor.pyramid_width; });
    m["srnn_rounds"] = nested_number<int>([](RunConfig& c) -> int& { return c.model.extractor.srnn_rounds; });
    m["srnn_enabled"] = nested_bool([](RunConfig& c) -> bool& { return c.model.extractor.srnn_enabled; });
    m["box_hidden"] = nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.heads.box_hidden; });
    m["mask_width"] = nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.heads.mask_width; });
    m["mask_res"] = nested_number<int>([](RunConfig& c) -> int& { return c.model.heads.mask_res; });
    m["train_proposals"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.detect.train_proposals; });
    m["test_proposals"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.detect.test_proposals; });
    m["proposals_per_level"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.detect.proposals_per_level; });
    m["max_mask_rois"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.detect.max_mask_rois; });
    m["max_detections"] =
        nested_number<std::size_t>([](RunConfig& c) -> std::size_t& { return c.model.detect.max_detections; });
    m["score_thresh"] = nested_number<double>([](RunConfig& c) -> double& { return c.model.detect.score_thresh; });
    m["mask_margin"] = nested_number<double>([](RunConfig& c) -> double& { return c.model.detect.mask_margin; });
    m["smooth_l1_beta"] = nested_number<double>([](RunConfig& c) -> double& { return c.model.detect.smooth_l1_beta; });
    m["normalized_deltas"] = nested_bool([](RunConfig& c) -> bool& { return c.model.detect.normalized_deltas; });
    return m;
  }();
  return t;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, s] : table()) k.push_back(name);
    return k;
  }();
  return keys;
}

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{
      "stem_width",     "stage_widths",        "pyramid_width", "srnn_rounds",
      "srnn_enabled",     "box_hidden",     "mask_width",          "mask_res",      "train_proposals",
      "test_proposals",   "proposals_per_level", "max_mask_rois",  "max_detections", "score_thresh",
      "mask_margin",      "smooth_l1_beta", "normalized_deltas"};
  return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second.set(cfg, key, value);
}

std::string get_setting(const RunConfig& cfg, const std::string& key) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second.get(cfg);
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string format_config(const RunConfig& cfg, const std::vector<std::string>& keys) {
  std::string out;
  for (const auto& k : keys) out += k + "=" + get_setting(cfg, k) + "\n";
  return out;
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  const auto& ex = c.model.extractor;
  require(c.threads > 0, "threads must be positive");
  require(c.batch_size == 1, "only batch_size=1 is supported");
  require(ex.pyramid_width > 0, "pyramid_width must be positive");
  require(ex.srnn_rounds > 0, "srnn_rounds must be positive");
  require(ex.backbone.stem_width > 0, "stem_width must be positive");
  for (std::size_t w : ex.backbone.widths) require(w > 0, "stage widths must be positive");
  require(c.train.learning_rate > 0 && std::isfinite(c.train.learning_rate), "learning_rate must be positive");
  require(c.train.momentum >= 0 && c.train.momentum < 1, "momentum must be in [0, 1)");
  require(c.train.clip_norm >= 0, "clip_norm must be non-negative");
  require(c.model.heads.box_hidden > 0 && c.model.heads.mask_width > 0, "head widths must be positive");
  require(c.model.heads.mask_res == 14 || c.model.heads.mask_res == 28, "mask_res must be 14 or 28");
  require(c.model.detect.train_proposals > 0 && c.model.detect.test_proposals > 0, "proposal counts must be positive");
  require(c.model.detect.proposals_per_level > 0, "proposals_per_level must be positive");
  require(c.model.detect.max_mask_rois > 0 && c.model.detect.max_detections > 0, "ROI caps must be positive");
  require(c.model.detect.score_thresh > 0 && c.model.detect.score_thresh < 1, "score_thresh must be in (0, 1)");
  require(c.model.detect.mask_margin >= 0, "mask_margin must be non-negative");
  require(c.model.detect.smooth_l1_beta > 0, "smooth_l1_beta must be positive");
  require(c.alpha >= 0 && c.alpha <= 1, "alpha must be in [0, 1]");
  require(c.count > 0, "count must be positive");
  require(c.image_size > 0 && c.image_size % 32 == 0, "image_size must be a positive multiple of 32");
  require(c.trials > 0, "trials must be positive");
}

}  // namespace fpnsrnn
