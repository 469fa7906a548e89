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

#ifndef CTRLFLOW_FLOW_HPP_
#define CTRLFLOW_FLOW_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctrlflow/common.hpp"
#include "ctrlflow/measures.hpp"
#include "ctrlflow/noising.hpp"
#include "ctrlflow/regression.hpp"
#include "ctrlflow/systems.hpp"
#include "ctrlflow/trajectory.hpp"

namespace ctrlflow {

struct ClosedLoopPath {
  TrajectoryControlPair pair;  // controls are the law's outputs at grid points
  std::size_t extrapolated_steps = 0;
};

// RK4 on a uniform grid over [0, T] of
//   forward:   z' =  f(z, u(t, z))
//   reversed:  z' = -f(z, u(T - t, z))
// with the law evaluated at every stage.
ClosedLoopPath IntegrateClosedLoop(const ControlAffineSystem& sys,
                                   const ControlLaw& law, const Vector& z0,
                                   double horizon, int n_grid,
                                   Direction direction);

// Empirical law of the pairs' states at each requested time.
std::vector<EmpiricalMeasure> MarginalSnapshots(
    const std::vector<TrajectoryControlPair>& pairs,
    const std::vector<double>& times);

using PointSampler = std::function<Vector(RngStream&)>;

struct RolloutBatch {
  std::vector<TrajectoryControlPair> pairs;
  std::vector<std::size_t> kept_index;
  std::vector<Vector> starts;  // every drawn start, kept or not
  std::size_t excluded = 0;
  std::size_t extrapolated_steps = 0;
};

// Stabilizing rollouts for a law fitted on noising data generated under the
// reversed dynamics of `sys`: draws N terminal points (stream "terminal") and
// integrates the reversed closed loop of the noising system, i.e.
// z' = f(z, u(T - t, z)) for the physical `sys`. Blow-ups are excluded.
RolloutBatch ResampleAndReverse(const ControlAffineSystem& sys,
                                const ControlLaw& law,
                                const PointSampler& terminal_sampler, int n,
                                double horizon, int n_grid, std::uint64_t seed);

// Closed-loop runs from explicit starting points, parallel across points.
RolloutBatch RolloutFrom(const ControlAffineSystem& sys, const ControlLaw& law,
                         const std::vector<Vector>& starts, double horizon,
                         int n_grid, Direction direction);

// Two-start divergence probe. `growth` is |dz(T)| / |dz(0)| for a start
// perturbed by `perturbation`; `bound` is exp(L T) with L the largest
// finite-difference slope of the closed-loop field seen along the path.
// Growth beyond the bound hints at non-unique or non-Lipschitz flow.
struct SensitivityReport {
  double growth = 0.0;
  double bound = 0.0;
  bool warning = false;
};
SensitivityReport CheckSensitivity(const ControlAffineSystem& sys,
                                   const ControlLaw& law, const Vector& z0,
                                   double horizon, int n_grid,
                                   Direction direction,
                                   double perturbation = 1e-6);

// CSV with header sample_id,x_1..x_k.
void WriteSnapshotCsv(const EmpiricalMeasure& m, const std::string& path);

}  // namespace ctrlflow

#endif  // CTRLFLOW_FLOW_HPP_
