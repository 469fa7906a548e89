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

#ifndef CTRLFLOW_NOISING_HPP_
#define CTRLFLOW_NOISING_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrlflow/common.hpp"
#include "ctrlflow/measures.hpp"
#include "ctrlflow/regression.hpp"
#include "ctrlflow/systems.hpp"
#include "ctrlflow/trajectory.hpp"

namespace ctrlflow {

// Running cost L(x, u) = theta |u|^2.
struct QuadraticCost {
  double theta = 1.0;
  void Validate() const;
};

// Costate equation sign. With a state-independent running cost both choices
// give the same flow; `kPaper` adds the running-cost gradient instead of
// subtracting it.
enum class AdjointSign { kCanonical, kPaper };
AdjointSign ParseAdjointSign(const std::string& name);
std::string ToString(AdjointSign sign);

// Minimizer over u of -<p, f(x, u)> + theta |u|^2:
// u_i = <p, f_i(x)> / (2 theta).
Vector PmpOptimalControl(const ControlAffineSystem& sys,
                         const QuadraticCost& cost, const Vector& x,
                         const Vector& p);

// H(x, p) = -<p, f(x, u*)> + theta |u*|^2 at the minimizing control.
double PmpHamiltonian(const ControlAffineSystem& sys, const QuadraticCost& cost,
                      const Vector& x, const Vector& p);

struct PmpExtremal {
  TrajectoryControlPair pair;  // states and minimizing controls
  Matrix costates;             // n x d
  std::vector<double> hamiltonian;
  double MaxHamiltonianDrift() const;  // max_k |H_k - H_0|
};

// Integrates the coupled system
//   w' = -f(w, u*),   p' = Df(w, u*)^T p -/+ grad_x L
// from (x0, p0) with RK4 on a uniform grid of n_grid points over [0, T].
// Throws BlowUpError when |w| or |p| leaves the finite region.
PmpExtremal PmpExtremalPath(const ControlAffineSystem& sys,
                            const QuadraticCost& cost, const Vector& x0,
                            const Vector& p0, double horizon, int n_grid,
                            AdjointSign sign = AdjointSign::kCanonical);

// State of the extremal from x with initial costate p0 at time t.
Vector ExpMap(const ControlAffineSystem& sys, const QuadraticCost& cost,
              const Vector& x, double t, const Vector& p0, int n_grid);

enum class Direction { kForward, kReversed };
Direction ParseDirection(const std::string& name);
std::string ToString(Direction direction);

// Control path on a grid, piecewise linear in between.
struct ControlPath {
  std::vector<double> times;
  Matrix values;  // n x m
};

using BrownianControlPath = ControlPath;

// values[0] = 0; independent N(0, sigma^2 dt) increments per coordinate.
BrownianControlPath SampleBrownianControl(int m, double horizon, int n_grid,
                                          double sigma, std::uint64_t seed,
                                          std::uint64_t index = 0);

// Integrates w' = +/- f(w, u(t)) on the control path's own grid with RK4
// (controls linear within a step). Returns the full pair.
TrajectoryControlPair EndpointMap(const ControlAffineSystem& sys,
                                  const Vector& x0, const ControlPath& control,
                                  Direction direction);

// The controls of a pair, as a path.
ControlPath ControlsOf(const TrajectoryControlPair& pair);

struct NoisingConfig {
  enum class Mode { kPmp, kRandomized };
  Mode mode = Mode::kPmp;
  MeasureSpec start;          // law of the starting points (the target set)
  double costate_scale = 1.0; // p0 ~ N(0, s^2 I)
  QuadraticCost cost;
  AdjointSign adjoint_sign = AdjointSign::kCanonical;
  double sigma = 1.0;         // Brownian scale (randomized mode)
  int n_samples = 100;
  double horizon = 1.0;
  int n_grid = 200;
  int n_sample_times = 50;    // shared subsampling grid for the dataset
  std::uint64_t seed = 0;
};

struct NoisingResult {
  RegressionDataset dataset;
  std::vector<TrajectoryControlPair> trajectories;  // the kept ones
  std::vector<std::size_t> kept_index;
  std::size_t excluded = 0;
  double max_hamiltonian_drift = 0.0;  // pmp mode only
  nlohmann::json Metadata() const;
};

// Draws starting points and costates (or Brownian controls) sample by sample
// from streams keyed by (seed, name, index); runs the reversed dynamics;
// drops blown-up samples.
NoisingResult GenerateNoisingDataset(const ControlAffineSystem& sys,
                                     const NoisingConfig& config);

}  // namespace ctrlflow

#endif  // CTRLFLOW_NOISING_HPP_
