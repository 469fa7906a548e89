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
#include <complex>
#include <numbers>

#include "ctrlflow/interpolants.hpp"
#include "ctrlflow/linalg.hpp"
#include "ctrlflow/systems.hpp"
#include "ctrlflow/trajectory.hpp"

namespace ctrlflow {
namespace {

constexpr double kPi = std::numbers::pi;

Matrix DoubleIntA() { return (Matrix(2, 2) << 0, 1, 0, 0).finished(); }
Matrix DoubleIntB() { return (Matrix(2, 1) << 0, 1).finished(); }

double Energy(const TrajectoryControlPair& pair) {
  const auto w = SimpsonWeights(static_cast<int>(pair.size()), pair.horizon());
  double e = 0.0;
  for (std::size_t k = 0; k < pair.size(); ++k) e += w[k] * pair.controls.row(k).squaredNorm();
  return e;
}

TEST(Expm, MatchesClosedFormRotation) {
  Matrix a(2, 2);
  a << 0, -1.3, 1.3, 0;
  Matrix exact(2, 2);
  exact << std::cos(1.3), -std::sin(1.3), std::sin(1.3), std::cos(1.3);
  EXPECT_LE((Expm(a) - exact).cwiseAbs().maxCoeff(), 1e-14);
  Matrix big = 40.0 * a;
  EXPECT_LE((Expm(big) * Expm(-big) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gramian, IdentityForSingleIntegrator) {
  const auto g = ComputeGramian(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 1.0);
  EXPECT_LE((g.W - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Gramian, DoubleIntegratorClosedForm) {
  // Integral of (t, 1)(t, 1)^T over [0, T].
  for (double T : {1.0, 2.5}) {
    const auto g = ComputeGramian(DoubleIntA(), DoubleIntB(), T);
    Matrix exact(2, 2);
    exact << T * T * T / 3.0, T * T / 2.0, T * T / 2.0, T;
    EXPECT_LE((g.W - exact).cwiseAbs().maxCoeff(), 1e-8) << T;
  }
}

TEST(Gramian, QuadraticInB) {
  const auto lin = SixStateDefault();
  const auto g1 = ComputeGramian(lin.A, lin.B, 1.7);
  const auto g2 = ComputeGramian(lin.A, 2.0 * lin.B, 1.7);
  EXPECT_LE((g2.W - 4.0 * g1.W).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gramian, SymmetricPositiveDefiniteWhenControllable) {
  RngStream rng(1, "gramian");
  for (int k = 0; k < 10; ++k) {
    const Matrix a = Matrix::NullaryExpr(3, 3, [&] { return rng.Normal(); });
    const Matrix b = Matrix::NullaryExpr(3, 1, [&] { return rng.Normal(); });
    if (!LinearSystem(a, b).Controllable()) continue;
    const auto g = ComputeGramian(a, b, 1.0);
    EXPECT_LE((g.W - g.W.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(g.W).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Gramian, RejectsBadInput) {
  EXPECT_THROW(ComputeGramian(Matrix::Zero(2, 3), Matrix::Zero(2, 1), 1.0), DimensionError);
  EXPECT_THROW(ComputeGramian(Matrix::Zero(2, 2), Matrix::Zero(3, 1), 1.0), DimensionError);
  EXPECT_THROW(ComputeGramian(Matrix::Zero(2, 2), Matrix::Zero(2, 1), -1.0), ConfigError);
}

TEST(MinEnergy, SingleIntegratorConstantControl) {
  const auto sp = MinEnergyPair(Matrix::Zero(2, 2), Matrix::Identity(2, 2), Vector::Zero(2),
                                Vector::Unit(2, 0), 1.0, 101);
  for (std::size_t k = 0; k < sp.pair.size(); ++k) {
    EXPECT_NEAR(sp.pair.controls(k, 0), 1.0, 1e-12);
    EXPECT_NEAR(sp.pair.controls(k, 1), 0.0, 1e-12);
    EXPECT_NEAR(sp.pair.states(k, 0), sp.pair.times[k], 1e-12);
  }
}

TEST(MinEnergy, DoubleIntegratorCanonicalControl) {
  // W^-1 = [[12, -6], [-6, 4]]; u(t) = (1 - t, 1) W^-1 (1, 0) = 6 - 12 t.
  const auto sp = MinEnergyPair(DoubleIntA(), DoubleIntB(), Vector::Zero(2), Vector::Unit(2, 0), 1.0, 2000);
  for (std::size_t k = 0; k < sp.pair.size(); ++k) {
    EXPECT_NEAR(sp.pair.controls(k, 0), 6.0 - 12.0 * sp.pair.times[k], 1e-8);
  }
  EXPECT_LE(sp.terminal_error, 1e-6);
}

TEST(MinEnergy, ZeroDisplacementGivesZeroControl) {
  const Vector x = (Vector(2) << 0.4, -0.9).finished();
  const auto sp = MinEnergyPair(Matrix::Zero(2, 2), Matrix::Identity(2, 2), x, x, 1.0, 50);
  EXPECT_LE(sp.pair.controls.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MinEnergy, EndpointExactnessOnRandomPairs) {
  const MinEnergySteerer steer(LinearSystem(DoubleIntA(), DoubleIntB()), 1.0, 2000);
  RngStream rng(2, "endpoints");
  for (int k = 0; k < 100; ++k) {
    Vector x0(2), xT(2);
    for (int i = 0; i < 2; ++i) {
      x0[i] = 2 * rng.Uniform() - 1;
      xT[i] = 2 * rng.Uniform() - 1;
    }
    const auto sp = steer.Steer(x0, xT);
    EXPECT_LE(sp.terminal_error, 1e-5);
    EXPECT_LE((sp.pair.FinalState() - xT).norm(), 1e-5);
    EXPECT_LE(DynamicsResidual(LinearSystem(DoubleIntA(), DoubleIntB()).ToControlAffine(), sp.pair), 1e-6);
  }
}

TEST(MinEnergy, EnergyBeatsEndpointPreservingPerturbations) {
  // Perturb by v - B^T e^{A^T (T-t)} W^-1 (reach of v), which keeps the endpoint.
  const Matrix A = DoubleIntA(), B = DoubleIntB();
  const LinearSystem lin(A, B);
  const int n = 2001;
  const MinEnergySteerer steer(lin, 1.0, n);
  const Vector x0 = (Vector(2) << 0.2, -0.3).finished(), xT = (Vector(2) << -0.7, 0.5).finished();
  const auto base = steer.Steer(x0, xT);
  const double e0 = Energy(base.pair);
  EXPECT_NEAR(e0, steer.MinimumEnergy(x0, xT), 1e-8);
  const auto w = SimpsonWeights(n, 1.0);
  const Matrix w_inv = steer.gramian().W.inverse();
  RngStream rng(3, "perturb");
  for (int trial = 0; trial < 20; ++trial) {
    const double a = rng.Normal(), b = rng.Normal(), c = rng.Normal();
    std::vector<double> v(n);
    Vector reach = Vector::Zero(2);
    for (int k = 0; k < n; ++k) {
      const double t = base.pair.times[k];
      v[k] = a * std::sin(3 * t) + b * t * t + c;
      reach += w[k] * Expm(A * (1.0 - t)) * B * v[k];
    }
    double energy = 0.0;
    for (int k = 0; k < n; ++k) {
      const double t = base.pair.times[k];
      const double corr = (B.transpose() * Expm(A.transpose() * (1.0 - t)) * w_inv * reach)(0);
      const double u = base.pair.controls(k, 0) + v[k] - corr;
      energy += w[k] * u * u;
    }
    EXPECT_GE(energy, e0 - 1e-8);
  }
}

TEST(MinEnergy, UncontrollablePairRejected) {
  const Matrix b = (Matrix(2, 1) << 1, 0).finished();
  EXPECT_THROW(MinEnergyPair(DoubleIntA(), b, Vector::Zero(2), Vector::Ones(2), 1.0, 10),
               UncontrollablePairError);
}

TEST(FeedbackSteer, ScalarExponentialDecay) {
  const Matrix A = Matrix::Zero(1, 1), B = Matrix::Ones(1, 1), K = -Matrix::Ones(1, 1);
  const auto sp = FeedbackSteerPair(A, B, K, Vector::Zero(1), Vector::Zero(1), Vector::Ones(1), 5.0, 4001);
  EXPECT_NEAR(sp.terminal_error, std::exp(-5.0), 1e-10);
  for (std::size_t k = 0; k < sp.pair.size(); k += 400) {
    EXPECT_NEAR(sp.pair.states(k, 0), std::exp(-sp.pair.times[k]), 1e-10);
  }
}

TEST(FeedbackSteer, StartAtEquilibriumStays) {
  const auto lin = SixStateDefault();
  const Matrix K = PlacePoles(lin.A, lin.B, std::vector<std::complex<double>>(6, -2.0));
  const Vector y = (Vector(6) << 1, 0, -2, 0, 0.5, 0).finished();
  const Vector alpha = EquilibriumFeedforward(lin.A, lin.B, y);
  const auto sp = FeedbackSteerPair(lin.A, lin.B, K, y, alpha, y, 2.0, 100);
  EXPECT_LE((sp.pair.states.rowwise() - y.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((sp.pair.controls.rowwise() - alpha.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(FeedbackSteer, SixStateOutputErrorAtHorizonSix) {
  const auto lin = SixStateDefault();
  const Matrix K = PlacePoles(lin.A, lin.B, std::vector<std::complex<double>>(6, -2.0));
  const Vector y = (Vector(6) << 1, 0, 1, 0, 0, 0).finished();
  RngStream rng(4, "six");
  for (int k = 0; k < 10; ++k) {
    const Vector x0 = 0.5 * rng.NormalVector(6);
    const auto sp = FeedbackSteerPair(lin.A, lin.B, K, y, Vector::Zero(3), x0, 6.0, 2000);
    EXPECT_LE((SixStateOutput(sp.pair.FinalState()) - SixStateOutput(y)).norm(), 1e-3);
  }
}

TEST(FeedbackSteer, ErrorFollowsExponentialEnvelope) {
  const Matrix A = DoubleIntA(), B = DoubleIntB();
  const Matrix K = PlacePoles(A, B, {-1.0, -2.0});
  const Vector x0 = (Vector(2) << 1.0, 0.0).finished();
  const double lambda = SpectralAbscissa(A + B * K);
  // The faster mode adds a relative e^{-T1} transient to the ratio, so T1 is
  // taken large enough for that to sit inside the 1% allowance.
  const auto e1 = FeedbackSteerPair(A, B, K, Vector::Zero(2), Vector::Zero(1), x0, 8.0, 8000).terminal_error;
  const auto e2 = FeedbackSteerPair(A, B, K, Vector::Zero(2), Vector::Zero(1), x0, 11.0, 11000).terminal_error;
  EXPECT_LE(e2 / e1, std::exp(lambda * 3.0) * 1.01);
}

TEST(FeedbackSteer, RejectsUnstableGainAndNonEquilibrium) {
  const Matrix A = DoubleIntA(), B = DoubleIntB();
  const Matrix bad = (Matrix(1, 2) << 1, 1).finished();
  EXPECT_THROW(FeedbackSteerPair(A, B, bad, Vector::Zero(2), Vector::Zero(1), Vector::Ones(2), 1.0, 10),
               UnstableGainError);
  const Matrix K = PlacePoles(A, B, {-1.0, -2.0});
  EXPECT_THROW(FeedbackSteerPair(A, B, K, Vector::Ones(2), Vector::Zero(1), Vector::Ones(2), 1.0, 10),
               InfeasibleTargetError);
}

TEST(PlacePoles, DoubleIntegratorGain) {
  const Matrix K = PlacePoles(DoubleIntA(), DoubleIntB(), {-1.0, -2.0});
  EXPECT_NEAR(K(0, 0), -2.0, 1e-10);
  EXPECT_NEAR(K(0, 1), -3.0, 1e-10);
}

TEST(PlacePoles, ScalarGain) {
  const Matrix K = PlacePoles(Matrix::Zero(1, 1), Matrix::Ones(1, 1), {-3.0});
  EXPECT_NEAR(K(0, 0), -3.0, 1e-12);
}

TEST(PlacePoles, MultiInputSpectrumMatches) {
  const auto lin = SixStateDefault();
  const std::vector<std::complex<double>> poles = {{-1, 1}, {-1, -1}, -2.0, -3.0, -4.0, -5.0};
  const Matrix K = PlacePoles(lin.A, lin.B, poles, 7);
  auto eig = Eigen::EigenSolver<Matrix>(lin.A + lin.B * K).eigenvalues();
  std::vector<std::complex<double>> got(eig.data(), eig.data() + eig.size());
  for (const auto& p : poles) {
    double best = 1e9;
    for (const auto& g : got) best = std::min(best, std::abs(g - p));
    EXPECT_LE(best, 1e-6);
  }
}

TEST(PlacePoles, RejectsUncontrollableAndBadPoleLists) {
  const Matrix b = (Matrix(2, 1) << 1, 0).finished();
  EXPECT_THROW(PlacePoles(DoubleIntA(), b, {-1.0, -2.0}), UncontrollablePairError);
  EXPECT_THROW(PlacePoles(DoubleIntA(), DoubleIntB(), {-1.0}), ConfigError);
  EXPECT_THROW(PlacePoles(DoubleIntA(), DoubleIntB(), {{-1, 1}, {-2, 1}}), ConfigError);
}

double LastAmplitude(const SteeringPair& sp) {
  // The second control is c cos t on the second phase; cos(4 pi) = 1.
  return sp.pair.controls(sp.pair.controls.rows() - 1, 1);
}

TEST(Brockett, VerticalLift) {
  const auto sp = BrockettSteerPair(Vector::Zero(3), Vector::Unit(3, 2), 4000);
  EXPECT_NEAR(LastAmplitude(sp), 1.0 / kPi, 1e-8);
  EXPECT_LE((sp.pair.FinalState() - Vector::Unit(3, 2)).norm(), 1e-6);
  // Phase one keeps both controls at zero.
  for (std::size_t k = 0; sp.pair.times[k] < 2 * kPi - 1e-12; ++k) {
    EXPECT_EQ(sp.pair.controls(k, 0), 0.0);
    EXPECT_EQ(sp.pair.controls(k, 1), 0.0);
  }
}

TEST(Brockett, PlanarMoveAccumulatesHalfUnit) {
  const Vector y = (Vector(3) << 1, 1, 0).finished();
  const auto sp = BrockettSteerPair(Vector::Zero(3), y, 4000);
  EXPECT_NEAR(sp.pair.StateAt(2 * kPi)[2], 0.5, 1e-10);
  EXPECT_NEAR(LastAmplitude(sp), -1.0 / (2 * kPi), 1e-8);
  EXPECT_LE(sp.terminal_error, 1e-6);
}

TEST(Brockett, RoundTripAtOriginUsesNonzeroPhaseTwo) {
  const auto sp = BrockettSteerPair(Vector::Zero(3), Vector::Zero(3), 4000);
  EXPECT_LE(sp.pair.FinalState().norm(), 1e-6);
  EXPECT_GT(sp.pair.controls.col(0).cwiseAbs().maxCoeff(), 0.5);
}

TEST(Brockett, RandomPairsLandOnTarget) {
  RngStream rng(5, "brockett");
  const auto sys = BuiltinSystem("brockett");
  for (int k = 0; k < 100; ++k) {
    Vector x(3), y(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = 2 * rng.Uniform() - 1;
      y[i] = 2 * rng.Uniform() - 1;
    }
    const auto sp = BrockettSteerPair(x, y, 4000);
    EXPECT_LE(sp.terminal_error, 1e-6);
    EXPECT_NEAR(sp.pair.horizon(), 4 * kPi, 1e-12);
  }
}

}  // namespace
}  // namespace ctrlflow
