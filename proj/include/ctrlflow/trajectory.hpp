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

#ifndef CTRLFLOW_TRAJECTORY_HPP_
#define CTRLFLOW_TRAJECTORY_HPP_

#include <functional>
#include <string>
#include <vector>

#include "ctrlflow/common.hpp"
#include "ctrlflow/systems.hpp"

namespace ctrlflow {

// A sampled trajectory-control pair. Row k of `states` / `controls` belongs to
// times[k]. Controls are piecewise linear between grid points. Times are
// nondecreasing; a repeated time marks a control discontinuity, with the
// left limit stored at the first copy and the right limit at the second.
struct TrajectoryControlPair {
  std::vector<double> times;
  Matrix states;    // n x d
  Matrix controls;  // n x m

  std::size_t size() const { return times.size(); }
  double horizon() const { return times.back() - times.front(); }
  Vector State(std::size_t k) const { return states.row(k).transpose(); }
  Vector Control(std::size_t k) const { return controls.row(k).transpose(); }
  Vector InitialState() const { return State(0); }
  Vector FinalState() const { return State(size() - 1); }

  // Linear interpolation; right-continuous at discontinuities.
  Vector StateAt(double t) const;
  Vector ControlAt(double t) const;

  // Throws ConfigError when the shape invariants fail.
  void Validate() const;
};

// Right-hand side of a time-dependent ODE x' = F(t, x).
using TimeField = std::function<Vector(double, const Vector&)>;

std::vector<double> UniformGrid(double t0, double t1, int n_points);

// Classical fourth-order Runge-Kutta on the given grid (zero-length steps are
// skipped). Throws BlowUpError once a state is non-finite or its norm exceeds
// `blowup`. Returns the states, one row per grid point.
Matrix IntegrateRk4(const TimeField& rhs, const std::vector<double>& grid,
                    const Vector& x0, double blowup = kBlowUpThreshold);

// Re-integrates the pair's controls through `sys` (scaled by `sign`, so -1
// uses the time-reversed field) from its first state with RK4 on the pair's
// grid, and reports max_k |x_k - states_k| / (1 + max_k |states_k|).
double DynamicsResidual(const ControlAffineSystem& sys,
                        const TrajectoryControlPair& pair, double sign = 1.0);

// CSV with header t,x_1..x_d,u_1..u_m.
void WritePairCsv(const TrajectoryControlPair& pair, const std::string& path);
TrajectoryControlPair ReadPairCsv(const std::string& path, int state_dim);

}  // namespace ctrlflow

#endif  // CTRLFLOW_TRAJECTORY_HPP_
