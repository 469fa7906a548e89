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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ctrlflow_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the CLI and returns its exit status; stdout lands in `out`.
int Cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(CTRLFLOW_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json Identity(const fs::path& out) {
  return json{{"schema_version", 1},
              {"kind", "transport_linear"},
              {"system", "linear"},
              {"A", {{0}}},
              {"B", {{1}}},
              {"mu0", {{"type", "gaussian"}, {"mean", {0}}, {"std", 1}}},
              {"muT", "mu0"},
              {"coupling", "paired"},
              {"n_grid", 100},
              {"eval_n_grid", 50},
              {"n_sample_times", 10},
              {"n_train", 16},
              {"n_eval", 8},
              {"seed", 1},
              {"output_dir", out.string()}};
}

TEST(Cli, DescribeSystemsListsBuiltins) {
  const auto dir = Scratch("describe");
  ASSERT_EQ(Cli("describe-systems", dir / "out.txt"), 0);
  const auto text = Slurp(dir / "out.txt");
  for (const char* name : {"brockett", "unicycle", "martinet", "six_state_default", "linear"}) {
    EXPECT_NE(text.find(name), std::string::npos) << name;
  }
}

TEST(Cli, RunThenPlot) {
  const auto dir = Scratch("run");
  std::ofstream(dir / "config.json") << Identity(dir / "run").dump();
  ASSERT_EQ(Cli("run " + (dir / "config.json").string() + " --set seed=5", dir / "out.txt"), 0) << Slurp(dir / "out.txt");
  EXPECT_NE(Slurp(dir / "out.txt").find("terminal_w2"), std::string::npos);
  std::ifstream cfg(dir / "run" / "config.json");
  EXPECT_EQ(json::parse(cfg).at("config").at("seed"), 5);
  ASSERT_EQ(Cli("plot " + (dir / "run").string(), dir / "plot.txt"), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "plot" / "scatter_achieved.dat"));
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  const auto dir = Scratch("bad");
  json j = Identity(dir / "run");
  j["horizon"] = -1;
  std::ofstream(dir / "config.json") << j.dump();
  EXPECT_EQ(Cli("run " + (dir / "config.json").string(), dir / "out.txt"), 2);
  EXPECT_FALSE(fs::exists(dir / "run"));
  EXPECT_EQ(Cli("run " + (dir / "missing.json").string(), dir / "out.txt"), 2);
  EXPECT_EQ(Cli("verify medium", dir / "out.txt"), 2);
  EXPECT_EQ(Cli("frobnicate", dir / "out.txt"), 2);
  EXPECT_EQ(Cli("plot " + dir.string(), dir / "out.txt"), 2);
}

TEST(Cli, StageFailureExitsWithThree) {
  const auto dir = Scratch("stage");
  json j = Identity(dir / "run");
  j["A"] = {{0, 0}, {0, 0}};
  j["B"] = {{1}, {0}};  // uncontrollable
  j["mu0"] = {{"type", "gaussian"}, {"mean", {0, 0}}, {"std", 1}};
  std::ofstream(dir / "config.json") << j.dump();
  EXPECT_EQ(Cli("run " + (dir / "config.json").string(), dir / "out.txt"), 3) << Slurp(dir / "out.txt");
  std::ifstream rep(dir / "run" / "report.json");
  ASSERT_TRUE(rep);
  const auto report = json::parse(rep);
  EXPECT_EQ(report.at("status"), "failed");
  EXPECT_TRUE(report.at("partial").get<bool>());
}

TEST(Cli, OutputRootOverride) {
  const auto dir = Scratch("root");
  json j = Identity("relative_run");
  std::ofstream(dir / "config.json") << j.dump();
  const std::string env = "CTRLFLOW_OUTPUT_ROOT=" + dir.string() + " ";
  const std::string cmd = env + CTRLFLOW_CLI + " run " + (dir / "config.json").string() + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "relative_run" / "report.json"));
}

TEST(Cli, FastVerifyPrintsTable) {
  const auto dir = Scratch("verify");
  const std::string cmd = "cd " + dir.string() + " && " + CTRLFLOW_CLI + " verify fast --json " +
                          (dir / "fast.json").string() + " > " + (dir / "out.txt").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto text = Slurp(dir / "out.txt");
  EXPECT_NE(text.find("PASS gramian_double_integrator"), std::string::npos);
  EXPECT_NE(text.find("PASS brockett_steering"), std::string::npos);
  EXPECT_NE(text.find("PASS pmp_hamiltonian_conservation"), std::string::npos);
  std::ifstream in(dir / "fast.json");
  EXPECT_TRUE(json::parse(in).at("all_passed").get<bool>());
}

}  // namespace
