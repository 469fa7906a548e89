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

#ifndef CTRLFLOW_SYSTEMS_HPP_
#define CTRLFLOW_SYSTEMS_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ctrlflow/common.hpp"

namespace ctrlflow {

using VectorField = std::function<Vector(const Vector&)>;
using FieldJacobian = std::function<Matrix(const Vector&)>;

// A control-affine system
//
//   x' = f0(x) + sum_i u_i f_i(x),   x in R^d, u in R^m,
//
// with analytic Jacobians of every field. Immutable once built; safe to share
// across threads.
class ControlAffineSystem {
 public:
  // An empty `drift` marks the system as driftless (f0 == 0).
  ControlAffineSystem(std::string name, int state_dim, int control_dim,
                      VectorField drift, FieldJacobian drift_jacobian,
                      std::vector<VectorField> control_fields,
                      std::vector<FieldJacobian> control_jacobians);

  const std::string& name() const { return name_; }
  int state_dim() const { return d_; }
  int control_dim() const { return m_; }
  bool driftless() const { return !drift_; }

  Vector Drift(const Vector& x) const;
  Matrix DriftJacobian(const Vector& x) const;
  Vector ControlField(int i, const Vector& x) const;
  Matrix ControlJacobian(int i, const Vector& x) const;
  // Columns are f_1(x) .. f_m(x).
  Matrix ControlMatrix(const Vector& x) const;

  // f0(x) + sum_i u_i f_i(x).
  Vector Eval(const Vector& x, const Vector& u) const;
  // d/dx of Eval(x, u) at fixed u.
  Matrix StateJacobian(const Vector& x, const Vector& u) const;

  // The system with every field negated: x' = -f0(x) - sum_i u_i f_i(x).
  ControlAffineSystem TimeReversed() const;

 private:
  std::string name_;
  int d_;
  int m_;
  VectorField drift_;
  FieldJacobian drift_jacobian_;
  std::vector<VectorField> fields_;
  std::vector<FieldJacobian> jacobians_;
};

// x' = A x + B u.
struct LinearSystem {
  Matrix A;
  Matrix B;

  LinearSystem(Matrix a, Matrix b);

  int state_dim() const { return static_cast<int>(A.rows()); }
  int control_dim() const { return static_cast<int>(B.cols()); }

  // [B AB ... A^{d-1}B].
  Matrix KalmanMatrix() const;
  int KalmanRank(double tol = 1e-9) const;
  bool Controllable() const { return KalmanRank() == state_dim(); }

  ControlAffineSystem ToControlAffine(std::string name = "linear") const;
};

Vector EvalDynamics(const ControlAffineSystem& sys, const Vector& x,
                    const Vector& u);

// [f, g](x) = Dg(x) f(x) - Df(x) g(x), componentwise
// [f,g]_i = sum_j (f_j d_j g_i - g_j d_j f_i).
Vector LieBracket(const Vector& f, const Vector& g, const Matrix& jf,
                  const Matrix& jg);
Vector LieBracket(const VectorField& f, const VectorField& g,
                  const FieldJacobian& jf, const FieldJacobian& jg,
                  const Vector& x);

// Numeric rank of span{g(x) : g in V^0 u ... u V^depth}, where V^0 holds the
// control fields and V^k = {[g, h] : g in V^0, h in V^j, j < k}. Brackets are
// evaluated through the analytic field Jacobians, and the Jacobians of nested
// brackets by central differences.
int HormanderRank(const ControlAffineSystem& sys, const Vector& x, int depth,
                  double rel_tol = 1e-8);

// Names: "brockett", "unicycle", "martinet", "six_state_default". Linear
// systems come from LinearSystem::ToControlAffine or the overload below.
ControlAffineSystem BuiltinSystem(const std::string& name);
ControlAffineSystem BuiltinSystem(const std::string& name,
                                  const std::optional<LinearSystem>& linear);

// Matrices of the six-state default: three decoupled double integrators with
// the controls acting on the velocity states.
LinearSystem SixStateDefault();
// Output map of the six-state default, h(x) = (x1, x3).
Vector SixStateOutput(const Vector& x);

std::vector<std::string> BuiltinSystemNames();

// Largest relative error between analytic Jacobians (drift and all control
// fields) and central differences with step h, at point x.
double JacobianCheck(const ControlAffineSystem& sys, const Vector& x,
                     double h = 1e-5);

// Checks |f_i(x)| <= M (|x| + 1) for the drift and every control field.
bool GrowthWitness(const ControlAffineSystem& sys, const Vector& x,
                   double bound = 10.0);

}  // namespace ctrlflow

#endif  // CTRLFLOW_SYSTEMS_HPP_
