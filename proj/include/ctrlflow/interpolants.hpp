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

#ifndef CTRLFLOW_INTERPOLANTS_HPP_
#define CTRLFLOW_INTERPOLANTS_HPP_

#include <complex>
#include <cstdint>
#include <vector>

#include "ctrlflow/common.hpp"
#include "ctrlflow/systems.hpp"
#include "ctrlflow/trajectory.hpp"

namespace ctrlflow {

// Controllability Gramian W = int_0^T e^{At} B B^T e^{A^T t} dt.
struct Gramian {
  Matrix W;
  double horizon = 0.0;
  int n_quad = 0;
};

// Composite Simpson over n_quad intervals (rounded up to even), symmetrized.
Gramian ComputeGramian(const Matrix& A, const Matrix& B, double horizon,
                       int n_quad = 256);

// A steering pair plus the distance of its final state from the requested
// target.
struct SteeringPair {
  TrajectoryControlPair pair;
  double terminal_error = 0.0;
};

// Minimum-energy steering for x' = Ax + Bu on [0, T]:
//   u(t) = B^T e^{A^T (T - t)} W^{-1} (xT - e^{AT} x0).
// The Gramian and the exponentials on the RK4 stage times are computed once
// and shared by every Steer call.
class MinEnergySteerer {
 public:
  MinEnergySteerer(const LinearSystem& sys, double horizon, int n_grid,
                   int n_quad = 256);

  SteeringPair Steer(const Vector& x0, const Vector& xT) const;
  // Closed-form energy int |u|^2 dt = v^T W^{-1} v, v = xT - e^{AT} x0.
  double MinimumEnergy(const Vector& x0, const Vector& xT) const;
  const Gramian& gramian() const { return gramian_; }
  const std::vector<double>& grid() const { return grid_; }

 private:
  LinearSystem sys_;
  double horizon_;
  std::vector<double> grid_;
  Gramian gramian_;
  Eigen::LDLT<Matrix> w_factor_;
  Matrix exp_at_;
  // B^T e^{A^T (T - s)} at grid points (even rows) and interval midpoints
  // (odd rows), stacked as (2n - 1) blocks of m x d.
  std::vector<Matrix> steer_rows_;
};

SteeringPair MinEnergyPair(const Matrix& A, const Matrix& B, const Vector& x0,
                           const Vector& xT, double horizon, int n_grid);

// Feedforward alpha with A y + B alpha = 0 (least squares); throws
// InfeasibleTargetError when the residual exceeds 1e-8.
Vector EquilibriumFeedforward(const Matrix& A, const Matrix& B, const Vector& y);

// Closed-loop steering u(t) = K (w(t) - y) + alpha_y toward an equilibrium y.
SteeringPair FeedbackSteerPair(const Matrix& A, const Matrix& B,
                               const Matrix& K, const Vector& y,
                               const Vector& alpha_y, const Vector& x0,
                               double horizon, int n_grid);

// Gain K such that spec(A + BK) equals the requested poles. Ackermann's
// formula for a single input; otherwise eigenstructure assignment through
// the Sylvester equation A X - X L = -B G with random G and a real Jordan
// matrix L carrying the poles (repeated poles are split into chains of
// length at most ceil(multiplicity / m)).
Matrix PlacePoles(const Matrix& A, const Matrix& B,
                  const std::vector<std::complex<double>>& poles,
                  std::uint64_t seed = 0);

// Two-phase steering of the Brockett integrator over [0, 4 pi]: constant
// controls move (x1, x2) onto (y1, y2) on [0, 2 pi], then
// u = (sin t, c cos t) with c = (y3 - w3(2 pi)) / pi fixes x3. The grid
// repeats the knot at 2 pi, where the control jumps.
SteeringPair BrockettSteerPair(const Vector& x, const Vector& y, int n_grid);

}  // namespace ctrlflow

#endif  // CTRLFLOW_INTERPOLANTS_HPP_
