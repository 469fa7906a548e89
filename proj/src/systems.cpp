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

#include "ctrlflow/systems.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace ctrlflow {

ControlAffineSystem::ControlAffineSystem(
    std::string name, int state_dim, int control_dim, VectorField drift,
    FieldJacobian drift_jacobian, std::vector<VectorField> control_fields,
    std::vector<FieldJacobian> control_jacobians)
    : name_(std::move(name)),
      d_(state_dim),
      m_(control_dim),
      drift_(std::move(drift)),
      drift_jacobian_(std::move(drift_jacobian)),
      fields_(std::move(control_fields)),
      jacobians_(std::move(control_jacobians)) {
  if (d_ < 1 || m_ < 0) throw ConfigError("system dimensions must be positive");
  if (static_cast<int>(fields_.size()) != m_ ||
      static_cast<int>(jacobians_.size()) != m_) {
    throw DimensionError("system '" + name_ + "': expected " +
                         std::to_string(m_) + " control fields");
  }
  if (static_cast<bool>(drift_) != static_cast<bool>(drift_jacobian_)) {
    throw ConfigError("system '" + name_ +
                      "': drift and drift Jacobian must be given together");
  }
}

Vector ControlAffineSystem::Drift(const Vector& x) const {
  return drift_ ? drift_(x) : Vector::Zero(d_);
}

Matrix ControlAffineSystem::DriftJacobian(const Vector& x) const {
  return drift_jacobian_ ? drift_jacobian_(x) : Matrix::Zero(d_, d_);
}

Vector ControlAffineSystem::ControlField(int i, const Vector& x) const {
  return fields_.at(i)(x);
}

Matrix ControlAffineSystem::ControlJacobian(int i, const Vector& x) const {
  return jacobians_.at(i)(x);
}

Matrix ControlAffineSystem::ControlMatrix(const Vector& x) const {
  Matrix g(d_, m_);
  for (int i = 0; i < m_; ++i) g.col(i) = fields_[i](x);
  return g;
}

Vector ControlAffineSystem::Eval(const Vector& x, const Vector& u) const {
  Vector dx = Drift(x);
  for (int i = 0; i < m_; ++i) {
    if (u[i] != 0.0) dx.noalias() += u[i] * fields_[i](x);
  }
  return dx;
}

Matrix ControlAffineSystem::StateJacobian(const Vector& x,
                                          const Vector& u) const {
  Matrix j = DriftJacobian(x);
  for (int i = 0; i < m_; ++i) {
    if (u[i] != 0.0) j.noalias() += u[i] * jacobians_[i](x);
  }
  return j;
}

ControlAffineSystem ControlAffineSystem::TimeReversed() const {
  auto neg_field = [](VectorField f) -> VectorField {
    return [f = std::move(f)](const Vector& x) -> Vector { return -f(x); };
  };
  auto neg_jac = [](FieldJacobian f) -> FieldJacobian {
    return [f = std::move(f)](const Vector& x) -> Matrix { return -f(x); };
  };
  std::vector<VectorField> fields;
  std::vector<FieldJacobian> jacs;
  for (int i = 0; i < m_; ++i) {
    fields.push_back(neg_field(fields_[i]));
    jacs.push_back(neg_jac(jacobians_[i]));
  }
  return ControlAffineSystem(name_ + "_reversed", d_, m_,
                             drift_ ? neg_field(drift_) : VectorField{},
                             drift_ ? neg_jac(drift_jacobian_) : FieldJacobian{},
                             std::move(fields), std::move(jacs));
}

LinearSystem::LinearSystem(Matrix a, Matrix b) : A(std::move(a)), B(std::move(b)) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    throw DimensionError("A must be square and nonempty");
  }
  if (B.rows() != A.rows()) {
    throw DimensionError("B must have as many rows as A");
  }
}

Matrix LinearSystem::KalmanMatrix() const {
  const Eigen::Index d = A.rows();
  const Eigen::Index m = B.cols();
  Matrix k(d, d * m);
  Matrix block = B;
  for (Eigen::Index i = 0; i < d; ++i) {
    k.middleCols(i * m, m) = block;
    block = A * block;
  }
  return k;
}

int LinearSystem::KalmanRank(double tol) const {
  if (B.cols() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(KalmanMatrix());
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > tol * s[0]) ++rank;
  }
  return rank;
}

ControlAffineSystem LinearSystem::ToControlAffine(std::string name) const {
  Matrix a = A;
  std::vector<VectorField> fields;
  std::vector<FieldJacobian> jacs;
  const Eigen::Index d = A.rows();
  for (Eigen::Index i = 0; i < B.cols(); ++i) {
    Vector b = B.col(i);
    fields.push_back([b](const Vector&) -> Vector { return b; });
    jacs.push_back([d](const Vector&) -> Matrix { return Matrix::Zero(d, d); });
  }
  const bool zero_drift = A.isZero(0.0);
  return ControlAffineSystem(
      std::move(name), static_cast<int>(d), static_cast<int>(B.cols()),
      zero_drift ? VectorField{} : VectorField([a](const Vector& x) -> Vector { return a * x; }),
      zero_drift ? FieldJacobian{} : FieldJacobian([a](const Vector&) -> Matrix { return a; }),
      std::move(fields), std::move(jacs));
}

Vector EvalDynamics(const ControlAffineSystem& sys, const Vector& x,
                    const Vector& u) {
  RequireDim(x, sys.state_dim(), "eval_dynamics state");
  RequireDim(u, sys.control_dim(), "eval_dynamics control");
  return sys.Eval(x, u);
}

Vector LieBracket(const Vector& f, const Vector& g, const Matrix& jf,
                  const Matrix& jg) {
  const Eigen::Index d = f.size();
  if (g.size() != d || jf.rows() != d || jf.cols() != d || jg.rows() != d ||
      jg.cols() != d) {
    throw DimensionError("lie_bracket: inconsistent dimensions");
  }
  return jg * f - jf * g;
}

Vector LieBracket(const VectorField& f, const VectorField& g,
                  const FieldJacobian& jf, const FieldJacobian& jg,
                  const Vector& x) {
  return LieBracket(f(x), g(x), jf(x), jg(x));
}

namespace {

struct FieldWithJacobian {
  VectorField field;
  FieldJacobian jacobian;
};

Matrix CentralDifferenceJacobian(const VectorField& f, const Vector& x,
                                 double h) {
  const Eigen::Index d = x.size();
  Matrix j(d, d);
  Vector xp = x;
  Vector xm = x;
  for (Eigen::Index k = 0; k < d; ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return j;
}

FieldWithJacobian Bracket(const FieldWithJacobian& a,
                          const FieldWithJacobian& b) {
  VectorField field = [a, b](const Vector& x) -> Vector {
    return LieBracket(a.field(x), b.field(x), a.jacobian(x), b.jacobian(x));
  };
  FieldJacobian jac = [field](const Vector& x) -> Matrix {
    return CentralDifferenceJacobian(field, x, 1e-4);
  };
  return {field, jac};
}

}  // namespace

int HormanderRank(const ControlAffineSystem& sys, const Vector& x, int depth,
                  double rel_tol) {
  if (!sys.driftless()) {
    throw UnsupportedSystemError("hormander_rank requires a driftless system, '" +
                                 sys.name() + "' has drift");
  }
  if (depth < 0) throw ConfigError("hormander_rank: depth must be >= 0");
  RequireDim(x, sys.state_dim(), "hormander_rank state");

  std::vector<std::vector<FieldWithJacobian>> levels(depth + 1);
  for (int i = 0; i < sys.control_dim(); ++i) {
    levels[0].push_back(
        {[&sys, i](const Vector& y) { return sys.ControlField(i, y); },
         [&sys, i](const Vector& y) { return sys.ControlJacobian(i, y); }});
  }
  for (int k = 1; k <= depth; ++k) {
    for (const auto& g : levels[0]) {
      for (int j = 0; j < k; ++j) {
        for (const auto& h : levels[j]) levels[k].push_back(Bracket(g, h));
      }
    }
  }

  std::vector<Vector> columns;
  for (const auto& level : levels) {
    for (const auto& g : level) columns.push_back(g.field(x));
  }
  if (columns.empty()) return 0;
  Matrix span(sys.state_dim(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    span.col(static_cast<Eigen::Index>(c)) = columns[c];
  }
  Eigen::JacobiSVD<Matrix> svd(span);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > rel_tol * s[0]) ++rank;
  }
  return rank;
}

namespace {

ControlAffineSystem Brockett() {
  // x1' = u1, x2' = u2, x3' = u1 x2.
  std::vector<VectorField> fields{
      [](const Vector& x) -> Vector { return Eigen::Vector3d(1.0, 0.0, x[1]); },
      [](const Vector&) -> Vector { return Eigen::Vector3d(0.0, 1.0, 0.0); }};
  std::vector<FieldJacobian> jacs{
      [](const Vector&) -> Matrix {
        Matrix j = Matrix::Zero(3, 3);
        j(2, 1) = 1.0;
        return j;
      },
      [](const Vector&) -> Matrix { return Matrix::Zero(3, 3); }};
  return ControlAffineSystem("brockett", 3, 2, {}, {}, std::move(fields),
                             std::move(jacs));
}

ControlAffineSystem Unicycle() {
  // State (x, y, heading), controls (v, steering rate).
  std::vector<VectorField> fields{
      [](const Vector& x) -> Vector {
        return Eigen::Vector3d(std::cos(x[2]), std::sin(x[2]), 0.0);
      },
      [](const Vector&) -> Vector { return Eigen::Vector3d(0.0, 0.0, 1.0); }};
  std::vector<FieldJacobian> jacs{
      [](const Vector& x) -> Matrix {
        Matrix j = Matrix::Zero(3, 3);
        j(0, 2) = -std::sin(x[2]);
        j(1, 2) = std::cos(x[2]);
        return j;
      },
      [](const Vector&) -> Matrix { return Matrix::Zero(3, 3); }};
  return ControlAffineSystem("unicycle", 3, 2, {}, {}, std::move(fields),
                             std::move(jacs));
}

ControlAffineSystem Martinet() {
  // x' = u1, y' = u2, z' = y^2 u1 / 2.
  std::vector<VectorField> fields{
      [](const Vector& x) -> Vector {
        return Eigen::Vector3d(1.0, 0.0, 0.5 * x[1] * x[1]);
      },
      [](const Vector&) -> Vector { return Eigen::Vector3d(0.0, 1.0, 0.0); }};
  std::vector<FieldJacobian> jacs{
      [](const Vector& x) -> Matrix {
        Matrix j = Matrix::Zero(3, 3);
        j(2, 1) = x[1];
        return j;
      },
      [](const Vector&) -> Matrix { return Matrix::Zero(3, 3); }};
  return ControlAffineSystem("martinet", 3, 2, {}, {}, std::move(fields),
                             std::move(jacs));
}

}  // namespace

LinearSystem SixStateDefault() {
  Matrix a = Matrix::Zero(6, 6);
  Matrix b = Matrix::Zero(6, 3);
  for (int k = 0; k < 3; ++k) {
    a(2 * k, 2 * k + 1) = 1.0;
    b(2 * k + 1, k) = 1.0;
  }
  return LinearSystem(std::move(a), std::move(b));
}

Vector SixStateOutput(const Vector& x) {
  RequireDim(x, 6, "six_state output");
  return Eigen::Vector2d(x[0], x[2]);
}

std::vector<std::string> BuiltinSystemNames() {
  return {"brockett", "unicycle", "martinet", "linear", "six_state_default"};
}

ControlAffineSystem BuiltinSystem(const std::string& name) {
  return BuiltinSystem(name, std::nullopt);
}

ControlAffineSystem BuiltinSystem(const std::string& name,
                                  const std::optional<LinearSystem>& linear) {
  if (name == "brockett") return Brockett();
  if (name == "unicycle") return Unicycle();
  if (name == "martinet") return Martinet();
  if (name == "six_state_default") {
    return SixStateDefault().ToControlAffine("six_state_default");
  }
  if (name == "linear") {
    if (!linear) throw ConfigError("system 'linear' needs matrices A and B");
    return linear->ToControlAffine("linear");
  }
  throw LookupError("unknown system '" + name + "'");
}

double JacobianCheck(const ControlAffineSystem& sys, const Vector& x,
                     double h) {
  auto rel_err = [&](const VectorField& f, const Matrix& analytic) {
    Matrix fd = CentralDifferenceJacobian(f, x, h);
    const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
    return (fd - analytic).cwiseAbs().maxCoeff() / scale;
  };
  double worst = rel_err([&](const Vector& y) { return sys.Drift(y); },
                         sys.DriftJacobian(x));
  for (int i = 0; i < sys.control_dim(); ++i) {
    worst = std::max(
        worst, rel_err([&](const Vector& y) { return sys.ControlField(i, y); },
                       sys.ControlJacobian(i, x)));
  }
  return worst;
}

bool GrowthWitness(const ControlAffineSystem& sys, const Vector& x,
                   double bound) {
  const double limit = bound * (x.norm() + 1.0);
  if (!(sys.Drift(x).norm() <= limit)) return false;
  for (int i = 0; i < sys.control_dim(); ++i) {
    if (!(sys.ControlField(i, x).norm() <= limit)) return false;
  }
  return true;
}

}  // namespace ctrlflow
