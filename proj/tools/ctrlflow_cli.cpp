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

// Command-line front end: run, plot, verify, describe-systems.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ctrlflow/experiment.hpp"
#include "ctrlflow/systems.hpp"
#include "ctrlflow/verification.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

using nlohmann::json;
using namespace ctrlflow;

int Run(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  for (const auto& o : overrides) ApplyOverride(doc, o);
  const auto config = ExperimentConfig::FromJson(doc);
  const auto report = RunExperiment(config);
  std::cout << "run: " << report.kind << " -> " << report.output_dir << '\n';
  for (const auto& [name, value] : report.metrics) std::cout << "  " << name << " = " << value << '\n';
  for (const auto& note : report.notes) std::cout << "  note: " << note << '\n';
  std::cout << "  config_hash = " << report.config_hash << "\n  wall_clock = "
            << report.wall_clock_seconds << " s\n";
  return kExitOk;
}

int Plot(const std::string& dir) {
  for (const auto& f : EmitPlotData(dir)) std::cout << f << '\n';
  return kExitOk;
}

int Verify(const std::string& suite, std::string json_path) {
  const char* root = std::getenv(kOutputRootEnv);
  const std::filesystem::path base = root && *root ? root : ".";
  const std::string scratch = (base / "verify_runs").string();
  const auto results = RunVerification(suite, scratch, &std::cout);
  if (suite == "full" && json_path.empty()) json_path = (base / "verify_full.json").string();
  if (!json_path.empty()) {
    std::ofstream(json_path) << ResultsJson(suite, results).dump(2) << '\n';
    std::cout << "results: " << json_path << '\n';
  }
  return kExitOk;
}

int DescribeSystems() {
  for (const auto& name : BuiltinSystemNames()) {
    if (name == "linear") {
      std::cout << "linear: x' = A x + B u, matrices from the config (A, B)\n";
      continue;
    }
    const auto sys = BuiltinSystem(name);
    std::cout << name << ": d=" << sys.state_dim() << " m=" << sys.control_dim()
              << (sys.driftless() ? " driftless" : " with drift");
    if (sys.driftless()) {
      const Vector x = Vector::Constant(sys.state_dim(), 0.3);
      std::cout << " bracket_rank(depth 2, x=0.3)=" << HormanderRank(sys, x, 2);
    }
    std::cout << '\n';
  }
  std::cout << "double_integrator: linear, d=2 m=1 (experiment shorthand)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctrlflow: flow matching for control-affine systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_option("--set", overrides, "override a top-level scalar, key=value (repeatable)");

  std::string run_dir;
  auto* plot = app.add_subcommand("plot", "write plot-ready files for a finished run");
  plot->add_option("run_dir", run_dir, "run directory")->required();

  std::string suite;
  std::string json_path;
  auto* verify = app.add_subcommand("verify", "run the acceptance checks");
  verify->add_option("suite", suite, "fast or full")->required();
  verify->add_option("--json", json_path, "write machine-readable results here");

  auto* describe = app.add_subcommand("describe-systems", "list the built-in systems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return Run(config_path, overrides);
    if (*plot) return Plot(run_dir);
    if (*verify) return Verify(suite, json_path);
    if (*describe) return DescribeSystems();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitStage;
  }
  return kExitOk;
}
