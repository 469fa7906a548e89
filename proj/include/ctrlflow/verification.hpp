// Copyright 2026 The ctrlflow Authors
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

#ifndef CTRLFLOW_VERIFICATION_HPP_
#define CTRLFLOW_VERIFICATION_HPP_

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace ctrlflow {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string comparison = "<=";  // how measured is held against tolerance
  double seconds = 0.0;
  double time_budget = 0.0;       // seconds; 0 means none
  std::string detail;
};

struct Check {
  std::string name;
  std::string suite;  // "fast" checks also belong to "full"
  std::function<CheckResult()> run;
};

// Every acceptance check. Experiment checks write their run directories
// under `scratch_dir`.
std::vector<Check> AcceptanceChecks(const std::string& scratch_dir);

// Throws ConfigError for suites other than "fast" and "full".
std::vector<CheckResult> RunVerification(const std::string& suite,
                                         const std::string& scratch_dir,
                                         std::ostream* table);

// Experiment documents behind the full suite, mirrored by configs/<name>.json
// apart from output_dir.
nlohmann::json BuiltinExperimentConfig(const std::string& name);
const std::vector<std::string>& BuiltinExperimentNames();

std::string FormatResult(const CheckResult& r);
nlohmann::json ResultsJson(const std::string& suite,
                           const std::vector<CheckResult>& results);

}  // namespace ctrlflow

#endif  // CTRLFLOW_VERIFICATION_HPP_
