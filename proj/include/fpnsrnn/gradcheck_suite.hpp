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

#include <functional>
#include <string>
#include <vector>

#include "fpnsrnn/gradcheck.hpp"

namespace fpnsrnn {

struct SuiteOptions {
  /// Comma-separated substrings; a case runs if its name contains any. Empty
  /// runs everything.
  std::string filter;
  std::size_t trials = 10;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

struct CaseResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t failed_trials = 0;
  double worst = 0.0;
  std::size_t kink_fallbacks = 0;
  std::size_t unresolved = 0;
  double seconds = 0.0;
  bool passed() const { return failed_trials == 0; }
};

struct SuiteResult {
  std::vector<CaseResult> cases;
  bool passed = true;
};

/// Every op and composite with a gradient check, in run order.
std::vector<std::string> gradcheck_case_names();

SuiteResult run_gradcheck_suite(const SuiteOptions& opts,
                                const std::function<void(const CaseResult&)>& on_case = {});

/// One line per case: name, worst error, trials, status.
std::string format_suite(const SuiteResult& r);

}  // namespace fpnsrnn
