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

#include <cmath>

#include "ctrlflow/systems.hpp"

namespace ctrlflow {
namespace {

Vector Vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(EvalDynamics, BrockettSubstitution) {
  const auto sys = BuiltinSystem("brockett");
  const Vector dx = EvalDynamics(sys, Vec({0, 2, 0}), Vec({1, 0}));
  EXPECT_EQ(dx, Vec({1, 0, 2}));
}

TEST(EvalDynamics, DriftlessZeroControl) {
  for (const char* name : {"brockett", "unicycle", "martinet"}) {
    const auto sys = BuiltinSystem(name);
    EXPECT_TRUE(EvalDynamics(sys, Vec({0.3, -1.2, 2.0}), Vector::Zero(2)).isZero(0.0)) << name;
  }
}

TEST(EvalDynamics, SingleIntegratorReturnsControl) {
  const LinearSystem lin(Matrix::Zero(3, 3), Matrix::Identity(3, 3));
  const auto sys = lin.ToControlAffine();
  const Vector u = Vec({3, -1, 0.5});
  EXPECT_EQ(EvalDynamics(sys, Vec({7, 8, 9}), u), u);
}

TEST(EvalDynamics, DimensionMismatchIsConfigError) {
  const auto sys = BuiltinSystem("unicycle");
  EXPECT_THROW(EvalDynamics(sys, Vec({0, 0}), Vec({1, 0})), ConfigError);
  EXPECT_THROW(EvalDynamics(sys, Vec({0, 0, 0}), Vec({1})), ConfigError);
}

TEST(LieBracket, BrockettFieldsGiveMinusE3) {
  const auto sys = BuiltinSystem("brockett");
  RngStream rng(1, "probe");
  for (int k = 0; k < 20; ++k) {
    const Vector x = rng.NormalVector(3);
    const Vector b = LieBracket(sys.ControlField(0, x), sys.ControlField(1, x),
                                sys.ControlJacobian(0, x), sys.ControlJacobian(1, x));
    EXPECT_NEAR((b - Vec({0, 0, -1})).norm(), 0.0, 1e-15);
  }
}

TEST(LieBracket, SelfBracketAndConstantFieldsVanish) {
  const auto sys = BuiltinSystem("unicycle");
  const Vector x = Vec({0.1, 0.2, 0.7});
  const Vector f = sys.ControlField(0, x);
  const Matrix jf = sys.ControlJacobian(0, x);
  EXPECT_TRUE(LieBracket(f, f, jf, jf).isZero(0.0));
  const Matrix zero = Matrix::Zero(3, 3);
  EXPECT_TRUE(LieBracket(Vec({1, 2, 3}), Vec({-1, 0, 4}), zero, zero).isZero(0.0));
}

TEST(LieBracket, BilinearAndAntisymmetric) {
  RngStream rng(2, "bracket");
  for (const char* name : {"brockett", "unicycle", "martinet"}) {
    const auto sys = BuiltinSystem(name);
    for (int k = 0; k < 50; ++k) {
      const Vector x = 2.0 * rng.NormalVector(3);
      const Vector f = sys.ControlField(0, x), g = sys.ControlField(1, x);
      const Matrix jf = sys.ControlJacobian(0, x), jg = sys.ControlJacobian(1, x);
      const Vector fg = LieBracket(f, g, jf, jg);
      EXPECT_LE((fg + LieBracket(g, f, jg, jf)).norm(), 1e-12);
      const double a = rng.Normal(), b = rng.Normal();
      // [a f + b g, g] = a [f, g]
      const Vector lhs = LieBracket(a * f + b * g, g, a * jf + b * jg, jg);
      EXPECT_LE((lhs - a * fg).norm(), 1e-12 * (1.0 + fg.norm()));
    }
  }
}

TEST(HormanderRank, Brockett) {
  const auto sys = BuiltinSystem("brockett");
  EXPECT_EQ(HormanderRank(sys, Vector::Zero(3), 1), 3);
  EXPECT_EQ(HormanderRank(sys, Vector::Zero(3), 0), 2);
  RngStream rng(3, "hormander");
  for (int k = 0; k < 100; ++k) EXPECT_EQ(HormanderRank(sys, 3.0 * rng.NormalVector(3), 1), 3);
}

TEST(HormanderRank, SingleFieldStaysRankOne) {
  const LinearSystem lin((Matrix(2, 2) << 0, 1, 0, 0).finished(), (Matrix(2, 1) << 0, 1).finished());
  const ControlAffineSystem sys(
      "single", 2, 1, nullptr, nullptr,
      {[](const Vector&) { return Vec({1, 0}); }},
      {[](const Vector&) { return Matrix::Zero(2, 2); }});
  EXPECT_EQ(HormanderRank(sys, Vec({0.5, -0.5}), 5), 1);
  EXPECT_THROW(HormanderRank(lin.ToControlAffine(), Vec({0, 0}), 1), UnsupportedSystemError);
}

TEST(BuiltinSystem, UnicycleFields) {
  const auto sys = BuiltinSystem("unicycle");
  ASSERT_EQ(sys.state_dim(), 3);
  ASSERT_EQ(sys.control_dim(), 2);
  const double th = 0.8;
  const Vector x = Vec({1, 2, th});
  EXPECT_LE((sys.ControlField(0, x) - Vec({std::cos(th), std::sin(th), 0})).norm(), 1e-15);
  EXPECT_EQ(sys.ControlField(1, x), Vec({0, 0, 1}));
}

TEST(BuiltinSystem, MartinetFields) {
  const auto sys = BuiltinSystem("martinet");
  ASSERT_EQ(sys.state_dim(), 3);
  ASSERT_EQ(sys.control_dim(), 2);
  const Vector x = Vec({0.3, 1.5, -2});
  EXPECT_EQ(sys.ControlField(0, x), Vec({1, 0, 0.5 * 1.5 * 1.5}));
  EXPECT_EQ(sys.ControlField(1, x), Vec({0, 1, 0}));
}

TEST(BuiltinSystem, BrockettFields) {
  const auto sys = BuiltinSystem("brockett");
  const Vector x = Vec({0.3, 1.5, -2});
  EXPECT_EQ(sys.ControlField(0, x), Vec({1, 0, 1.5}));
  EXPECT_EQ(sys.ControlField(1, x), Vec({0, 1, 0}));
  EXPECT_TRUE(sys.driftless());
}

TEST(BuiltinSystem, UnknownNameIsLookupError) {
  EXPECT_THROW(BuiltinSystem("segway"), LookupError);
  EXPECT_THROW(BuiltinSystem("linear"), ConfigError);
}

TEST(BuiltinSystem, SixStateDefaultLayout) {
  const auto lin = SixStateDefault();
  EXPECT_EQ(lin.state_dim(), 6);
  EXPECT_EQ(lin.control_dim(), 3);
  EXPECT_TRUE(lin.Controllable());
  const Vector x = Vec({1, 2, 3, 4, 5, 6});
  EXPECT_EQ(SixStateOutput(x), Vec({1, 3}));
  // Zero velocity is an equilibrium under zero control.
  EXPECT_TRUE((lin.A * Vec({1, 0, 2, 0, 3, 0})).isZero(0.0));
}

TEST(BuiltinSystem, JacobiansMatchFiniteDifferences) {
  RngStream rng(4, "jacobian");
  for (const auto& name : BuiltinSystemNames()) {
    if (name == "linear") continue;
    const auto sys = BuiltinSystem(name);
    for (int k = 0; k < 100; ++k) {
      Vector x(sys.state_dim());
      for (int i = 0; i < x.size(); ++i) x[i] = -2.0 + 4.0 * rng.Uniform();
      EXPECT_LE(JacobianCheck(sys, x, 1e-5), 1e-5) << name;
    }
  }
}

TEST(BuiltinSystem, FieldsAreFiniteWithSublinearGrowthOnBoundedProbes) {
  RngStream rng(5, "growth");
  for (const char* name : {"brockett", "unicycle", "six_state_default"}) {
    const auto sys = BuiltinSystem(name);
    for (int k = 0; k < 50; ++k) {
      const Vector x = 3.0 * rng.NormalVector(sys.state_dim());
      EXPECT_TRUE(GrowthWitness(sys, x, 10.0)) << name;
    }
  }
}

TEST(LinearSystem, KalmanRank) {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  EXPECT_EQ(LinearSystem(a, (Matrix(2, 1) << 0, 1).finished()).KalmanRank(), 2);
  EXPECT_EQ(LinearSystem(a, (Matrix(2, 1) << 1, 0).finished()).KalmanRank(), 1);
  EXPECT_THROW(LinearSystem(Matrix::Zero(2, 3), Matrix::Zero(2, 1)), DimensionError);
}

TEST(ControlAffineSystem, TimeReversedNegatesEveryField) {
  const auto sys = SixStateDefault().ToControlAffine();
  const auto rev = sys.TimeReversed();
  RngStream rng(6, "reverse");
  const Vector x = rng.NormalVector(6), u = rng.NormalVector(3);
  EXPECT_LE((rev.Eval(x, u) + sys.Eval(x, u)).norm(), 1e-15);
  EXPECT_LE((rev.StateJacobian(x, u) + sys.StateJacobian(x, u)).norm(), 1e-15);
}

}  // namespace
}  // namespace ctrlflow
