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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ctrlflow/flow.hpp"
#include "ctrlflow/interpolants.hpp"
#include "ctrlflow/noising.hpp"

namespace ctrlflow {
namespace {

ControlAffineSystem SingleIntegrator(int d) {
  return LinearSystem(Matrix::Zero(d, d), Matrix::Identity(d, d)).ToControlAffine("single");
}

const FunctionLaw kDecay([](double, const Vector& x) { return Vector(-x); });

TEST(ClosedLoop, ZeroLawDriftlessStaysPut) {
  const FunctionLaw zero([](double, const Vector&) { return Vector::Zero(2); });
  const Vector z0 = (Vector(3) << 1, -2, 0.5).finished();
  const auto path = IntegrateClosedLoop(BuiltinSystem("unicycle"), zero, z0, 1.0, 100, Direction::kForward);
  EXPECT_EQ(path.pair.FinalState(), z0);
  EXPECT_EQ(path.extrapolated_steps, 0u);
}

TEST(ClosedLoop, LinearDecayMatchesExponential) {
  const auto path = IntegrateClosedLoop(SingleIntegrator(1), kDecay, Vector::Ones(1), 1.0, 4000, Direction::kForward);
  for (std::size_t k = 0; k < path.pair.size(); k += 500) {
    EXPECT_NEAR(path.pair.states(k, 0), std::exp(-path.pair.times[k]), 1e-8);
  }
  EXPECT_NEAR(path.pair.FinalState()[0], std::exp(-1.0), 1e-8);
}

TEST(ClosedLoop, ReversedDirectionNegatesField) {
  const auto path = IntegrateClosedLoop(SingleIntegrator(1), kDecay, Vector::Ones(1), 1.0, 4000, Direction::kReversed);
  EXPECT_NEAR(path.pair.FinalState()[0], std::exp(1.0), 1e-8);
}

TEST(ClosedLoop, ReversedUsesFlippedTime) {
  // u(t, x) = t on the single integrator; reversed integrates -(T - s).
  const FunctionLaw ramp([](double t, const Vector&) { return Vector::Constant(1, t); });
  const double T = 2.0;
  const auto path = IntegrateClosedLoop(SingleIntegrator(1), ramp, Vector::Zero(1), T, 400, Direction::kReversed);
  EXPECT_NEAR(path.pair.FinalState()[0], -T * T / 2, 1e-12);
}

TEST(ClosedLoop, FourthOrderConvergence) {
  const FunctionLaw smooth([](double t, const Vector& x) { return Vector(-x * std::cos(t) + Vector::Constant(1, std::sin(3 * t))); });
  auto end = [&](int n) {
    return IntegrateClosedLoop(SingleIntegrator(1), smooth, Vector::Ones(1), 2.0, n, Direction::kForward).pair.FinalState()[0];
  };
  const double reference = end(20001);
  const double coarse = std::abs(end(21) - reference);
  const double fine = std::abs(end(41) - reference);
  EXPECT_GE(coarse / fine, 8.0);
}

TEST(ClosedLoop, ForwardThenReversedReturnsWithKernelLaw) {
  // Dense data from u = -x on the single integrator.
  RegressionDataset data;
  const auto grid = UniformGrid(0, 1, 41);
  for (int i = 0; i < 201; ++i) {
    const double x0 = -1.0 + 0.01 * i;
    TrajectoryControlPair pair;
    pair.times = grid;
    pair.states.resize(41, 1);
    pair.controls.resize(41, 1);
    for (int k = 0; k < 41; ++k) {
      pair.states(k, 0) = x0 * std::exp(-grid[k]);
      pair.controls(k, 0) = -pair.states(k, 0);
    }
    AppendTrajectory(data, pair, i, grid);
  }
  RegressionParams p;
  p.bandwidth_scale = 0.3;
  const auto law = FeedbackLaw::Fit(data, p, 0);
  const auto sys = SingleIntegrator(1);
  const Vector z0 = Vector::Constant(1, 0.4);
  const auto fwd = IntegrateClosedLoop(sys, law, z0, 1.0, 2000, Direction::kForward);
  // The reversed direction already evaluates the law at T - s.
  const auto back = IntegrateClosedLoop(sys, law, fwd.pair.FinalState(), 1.0, 2000, Direction::kReversed);
  EXPECT_LE(std::abs(back.pair.FinalState()[0] - z0[0]), 1e-6);
}

TEST(ClosedLoop, BlowUpIsReported) {
  const FunctionLaw explode([](double, const Vector& x) { return Vector(x.array().square()); });
  EXPECT_THROW(IntegrateClosedLoop(SingleIntegrator(1), explode, Vector::Ones(1), 5.0, 1000, Direction::kForward),
               BlowUpError);
}

TEST(Snapshots, InitialTimeGivesStartPoints) {
  std::vector<TrajectoryControlPair> pairs;
  RngStream rng(1, "snap");
  Matrix starts(10, 2);
  for (int i = 0; i < 10; ++i) {
    starts.row(i) = rng.NormalVector(2).transpose();
    pairs.push_back(MinEnergyPair(Matrix::Zero(2, 2), Matrix::Identity(2, 2), starts.row(i).transpose(),
                                  Vector::Zero(2), 1.0, 20).pair);
  }
  const auto snaps = MarginalSnapshots(pairs, {0.0});
  ASSERT_EQ(snaps.size(), 1u);
  EXPECT_EQ(snaps[0].points, starts);
  const auto single = MarginalSnapshots({pairs[0]}, {0.0});
  EXPECT_EQ(single[0].size(), 1);
}

TEST(Snapshots, InterpolatesLinearlyBetweenGridPoints) {
  TrajectoryControlPair pair;
  pair.times = {0.0, 1.0};
  pair.states = (Matrix(2, 1) << 0, 2).finished();
  pair.controls = Matrix::Zero(2, 1);
  EXPECT_DOUBLE_EQ(MarginalSnapshots({pair}, {0.25})[0].points(0, 0), 0.5);
}

TEST(Snapshots, BrockettTerminalMarginalIsTarget) {
  RngStream rng(2, "brockett_snap");
  std::vector<TrajectoryControlPair> pairs;
  Matrix targets(20, 3);
  for (int i = 0; i < 20; ++i) {
    targets.row(i) = rng.NormalVector(3).transpose();
    pairs.push_back(BrockettSteerPair(rng.NormalVector(3), targets.row(i).transpose(), 2000).pair);
  }
  const auto snaps = MarginalSnapshots(pairs, {pairs[0].horizon()});
  EXPECT_LE((snaps[0].points - targets).rowwise().norm().maxCoeff(), 1e-6);
}

TEST(Resample, EmptyAndDeterministic) {
  const auto sys = BuiltinSystem("unicycle");
  const FunctionLaw law([](double, const Vector& x) { return Vector(-x.head(2)); });
  const PointSampler sampler = [](RngStream& rng) { return rng.NormalVector(3); };
  EXPECT_TRUE(ResampleAndReverse(sys, law, sampler, 0, 1.0, 50, 1).pairs.empty());
  const auto a = ResampleAndReverse(sys, law, sampler, 8, 1.0, 50, 3);
  const auto b = ResampleAndReverse(sys, law, sampler, 8, 1.0, 50, 3);
  ASSERT_EQ(a.pairs.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(a.pairs[i].states, b.pairs[i].states);
}

TEST(Resample, UnicycleRoundTripLandsNearNoisingStart) {
  // Noise from the origin, learn the law, then reverse from one endpoint.
  NoisingConfig cfg;
  cfg.start.kind = MeasureSpec::Kind::kDirac;
  cfg.start.point = Vector::Zero(3);
  cfg.costate_scale = 5.0;
  cfg.horizon = 2.0;
  cfg.n_grid = 1000;
  cfg.n_samples = 1500;
  cfg.seed = 3;
  const auto sys = BuiltinSystem("unicycle");
  const auto noising = GenerateNoisingDataset(sys, cfg);
  RegressionParams p;
  p.bandwidth_scale = 0.05;
  const auto law = FeedbackLaw::Fit(noising.dataset, p, 3);
  // Endpoints far out in the tail sit where training data is sparse, so the
  // bound is held by the median over ten trajectories.
  std::vector<double> miss;
  for (int i = 0; i < 10; ++i) {
    const Vector end = noising.trajectories[i].FinalState();
    const PointSampler at_end = [end](RngStream&) { return end; };
    const auto batch = ResampleAndReverse(sys, law, at_end, 1, 2.0, 200, 1);
    ASSERT_EQ(batch.pairs.size(), 1u);
    miss.push_back(batch.pairs[0].FinalState().norm());
  }
  std::nth_element(miss.begin(), miss.begin() + 5, miss.end());
  EXPECT_LE(miss[5], 0.1);
}

TEST(Rollout, ExcludesBlowUps) {
  const FunctionLaw explode([](double, const Vector& x) { return Vector(x.array().square()); });
  const std::vector<Vector> starts = {Vector::Constant(1, 0.0), Vector::Constant(1, 5.0)};
  const auto batch = RolloutFrom(SingleIntegrator(1), explode, starts, 1.0, 200, Direction::kForward);
  EXPECT_EQ(batch.pairs.size(), 1u);
  EXPECT_EQ(batch.excluded, 1u);
  EXPECT_EQ(batch.kept_index, std::vector<std::size_t>{0});
}

TEST(Sensitivity, ContractingFlowRaisesNoWarning) {
  const auto rep = CheckSensitivity(SingleIntegrator(2), kDecay, Vector::Ones(2), 1.0, 200, Direction::kForward);
  EXPECT_FALSE(rep.warning);
  EXPECT_LE(rep.growth, 1.0);
}

TEST(Snapshots, CsvLayout) {
  const auto m = EmpiricalMeasure::Uniform((Matrix(2, 2) << 1, 2, 3, 4).finished());
  const auto path = std::filesystem::temp_directory_path() / "ctrlflow_snapshot_test.csv";
  WriteSnapshotCsv(m, path.string());
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sample_id,x_1,x_2");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace ctrlflow
