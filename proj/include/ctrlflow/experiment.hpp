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

#ifndef CTRLFLOW_EXPERIMENT_HPP_
#define CTRLFLOW_EXPERIMENT_HPP_

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrlflow/common.hpp"
#include "ctrlflow/measures.hpp"
#include "ctrlflow/noising.hpp"
#include "ctrlflow/regression.hpp"
#include "ctrlflow/systems.hpp"

namespace ctrlflow {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "CTRLFLOW_OUTPUT_ROOT";

// A pipeline stage failed; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class ExperimentKind {
  kTransportLinear,
  kOutputTransport,
  kBrockett,
  kStabilizePmp,
  kStabilizeRandom
};
ExperimentKind ParseExperimentKind(const std::string& name);
std::string ToString(ExperimentKind kind);

// Set the stabilizing rollouts aim at.
struct TargetSet {
  enum class Kind { kPoint, kSphere };
  Kind kind = Kind::kPoint;
  Vector center;
  double radius = 0.0;
  double Distance(const Vector& x) const;
  static TargetSet FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kTransportLinear;
  std::string system = "double_integrator";
  std::optional<LinearSystem> linear;  // for "linear"
  std::optional<MeasureSpec> mu0;
  std::optional<MeasureSpec> muT;
  bool muT_same_samples = false;       // "muT": "mu0"
  std::optional<MeasureSpec> nuT;      // output targets
  std::vector<int> output_indices = {0, 2};
  std::vector<std::complex<double>> poles;
  CouplingKind coupling = CouplingKind::kIndependent;
  double horizon = 1.0;
  int n_grid = 2000;
  int eval_n_grid = 400;
  int n_sample_times = 50;
  int n_train = 400;
  int n_eval = 100;
  bool eval_from_training = false;
  std::uint64_t seed = 0;
  RegressionParams regression;
  double costate_scale = 1.0;
  double sigma = 1.0;
  QuadraticCost cost;
  AdjointSign adjoint_sign = AdjointSign::kCanonical;
  std::optional<MeasureSpec> eval_start;
  std::optional<TargetSet> target_set;
  double success_radius = 0.2;
  bool sensitivity_check = true;
  std::string output_dir;

  nlohmann::json raw;  // the validated input document

  // Throws ConfigError on any schema violation (unknown keys included).
  static ExperimentConfig FromJson(const nlohmann::json& j);
  std::string Hash() const;  // FNV-1a of the canonical dump, hex
  // Resolved output directory (honours the output-root environment variable).
  std::string ResolvedOutputDir() const;
};

// Top-level keys that hold scalars and may be overridden from the command
// line.
const std::vector<std::string>& OverridableKeys();
// Applies "key=value" (value parsed as JSON, else as a string).
void ApplyOverride(nlohmann::json& config, const std::string& assignment);

struct ExperimentReport {
  std::string kind;
  std::map<std::string, double> metrics;
  std::vector<std::string> notes;
  std::string config_hash;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> manifest;  // paths relative to output_dir
  std::string output_dir;
  nlohmann::json series;              // distance-to-target time series
  nlohmann::json ToJson() const;
};

ExperimentReport RunExperiment(const ExperimentConfig& config);

// Reads a finished run directory and writes plot-ready whitespace-separated
// files into <run-dir>/plot. Returns the files written.
std::vector<std::string> EmitPlotData(const std::string& run_dir);

}  // namespace ctrlflow

#endif  // CTRLFLOW_EXPERIMENT_HPP_
