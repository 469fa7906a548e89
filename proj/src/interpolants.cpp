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

#include "ctrlflow/interpolants.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "ctrlflow/linalg.hpp"

namespace ctrlflow {

Gramian ComputeGramian(const Matrix& A, const Matrix& B, double horizon,
                       int n_quad) {
  if (A.rows() != A.cols()) throw DimensionError("gramian: A must be square");
  if (B.rows() != A.rows()) throw DimensionError("gramian: B rows must match A");
  if (!(horizon > 0.0)) throw ConfigError("gramian: horizon must be positive");
  if (n_quad < 16) throw ConfigError("gramian: n_quad must be >= 16");
  const int intervals = n_quad + (n_quad % 2);
  const Eigen::VectorXd w = SimpsonWeights(intervals + 1, horizon);
  const double h = horizon / intervals;
  Matrix acc = Matrix::Zero(A.rows(), A.rows());
  for (int k = 0; k <= intervals; ++k) {
    const Matrix eb = Expm(A * (k * h)) * B;
    acc.noalias() += w[k] * (eb * eb.transpose());
  }
  Gramian g;
  g.W = 0.5 * (acc + acc.transpose());
  g.horizon = horizon;
  g.n_quad = intervals;
  return g;
}

MinEnergySteerer::MinEnergySteerer(const LinearSystem& sys, double horizon,
                                   int n_grid, int n_quad)
    : sys_(sys),
      horizon_(horizon),
      grid_(UniformGrid(0.0, horizon, n_grid)),
      gramian_(ComputeGramian(sys.A, sys.B, horizon, n_quad)) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(gramian_.W);
  const double max_ev = es.eigenvalues().maxCoeff();
  const double min_ev = es.eigenvalues().minCoeff();
  if (!(max_ev > 0.0) || min_ev < 1e-10 * max_ev) {
    throw UncontrollablePairError(
        "min_energy_pair: Gramian is singular, (A, B) is not controllable");
  }
  w_factor_.compute(gramian_.W);
  exp_at_ = Expm(sys_.A * horizon_);
  const Matrix bt = sys_.B.transpose();
  const Matrix at = sys_.A.transpose();
  steer_rows_.reserve(2 * grid_.size() - 1);
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    steer_rows_.push_back(bt * Expm(at * (horizon_ - grid_[k])));
    if (k + 1 < grid_.size()) {
      const double mid = 0.5 * (grid_[k] + grid_[k + 1]);
      steer_rows_.push_back(bt * Expm(at * (horizon_ - mid)));
    }
  }
}

SteeringPair MinEnergySteerer::Steer(const Vector& x0, const Vector& xT) const {
  RequireDim(x0, sys_.state_dim(), "min_energy_pair x0");
  RequireDim(xT, sys_.state_dim(), "min_energy_pair xT");
  const Vector lambda = w_factor_.solve(xT - exp_at_ * x0);
  const auto n = static_cast<Eigen::Index>(grid_.size());
  SteeringPair out;
  auto& pair = out.pair;
  pair.times = grid_;
  pair.states.resize(n, sys_.state_dim());
  pair.controls.resize(n, sys_.control_dim());
  Vector x = x0;
  pair.states.row(0) = x.transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    pair.controls.row(k) = (steer_rows_[2 * k] * lambda).transpose();
  }
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double h = grid_[k + 1] - grid_[k];
    const Vector u0 = steer_rows_[2 * k] * lambda;
    const Vector um = steer_rows_[2 * k + 1] * lambda;
    const Vector u1 = steer_rows_[2 * k + 2] * lambda;
    const Vector k1 = sys_.A * x + sys_.B * u0;
    const Vector k2 = sys_.A * (x + 0.5 * h * k1) + sys_.B * um;
    const Vector k3 = sys_.A * (x + 0.5 * h * k2) + sys_.B * um;
    const Vector k4 = sys_.A * (x + h * k3) + sys_.B * u1;
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    pair.states.row(k + 1) = x.transpose();
  }
  out.terminal_error = (x - xT).norm();
  return out;
}

double MinEnergySteerer::MinimumEnergy(const Vector& x0,
                                       const Vector& xT) const {
  const Vector v = xT - exp_at_ * x0;
  return v.dot(w_factor_.solve(v));
}

SteeringPair MinEnergyPair(const Matrix& A, const Matrix& B, const Vector& x0,
                           const Vector& xT, double horizon, int n_grid) {
  return MinEnergySteerer(LinearSystem(A, B), horizon, n_grid).Steer(x0, xT);
}

Vector EquilibriumFeedforward(const Matrix& A, const Matrix& B,
                              const Vector& y) {
  RequireDim(y, A.rows(), "equilibrium target");
  const Vector rhs = -A * y;
  Vector alpha = B.completeOrthogonalDecomposition().solve(rhs);
  if ((A * y + B * alpha).norm() > 1e-8) {
    throw InfeasibleTargetError("target is not an equilibrium of (A, B)");
  }
  return alpha;
}

SteeringPair FeedbackSteerPair(const Matrix& A, const Matrix& B,
                               const Matrix& K, const Vector& y,
                               const Vector& alpha_y, const Vector& x0,
                               double horizon, int n_grid) {
  const LinearSystem sys(A, B);
  if (K.rows() != B.cols() || K.cols() != A.rows()) {
    throw DimensionError("feedback_steer_pair: K must be m x d");
  }
  RequireDim(y, A.rows(), "feedback_steer_pair y");
  RequireDim(x0, A.rows(), "feedback_steer_pair x0");
  RequireDim(alpha_y, B.cols(), "feedback_steer_pair alpha_y");
  if (!(horizon > 0.0)) throw ConfigError("feedback_steer_pair: horizon must be positive");
  if ((A * y + B * alpha_y).norm() > 1e-8) {
    throw InfeasibleTargetError("feedback_steer_pair: y is not an equilibrium for alpha_y");
  }
  const Matrix closed = A + B * K;
  if (!(SpectralAbscissa(closed) < 0.0)) {
    throw UnstableGainError("feedback_steer_pair: A + BK is not Hurwitz");
  }
  const Vector offset = B * (alpha_y - K * y);
  const auto grid = UniformGrid(0.0, horizon, n_grid);
  SteeringPair out;
  out.pair.times = grid;
  out.pair.states = IntegrateRk4(
      [&](double, const Vector& x) -> Vector { return closed * x + offset; },
      grid, x0);
  out.pair.controls.resize(out.pair.states.rows(), B.cols());
  for (Eigen::Index k = 0; k < out.pair.states.rows(); ++k) {
    out.pair.controls.row(k) =
        (K * (out.pair.states.row(k).transpose() - y) + alpha_y).transpose();
  }
  out.terminal_error = (out.pair.FinalState() - y).norm();
  return out;
}

namespace {

using Complex = std::complex<double>;

Matrix Ackermann(const Matrix& A, const Matrix& B,
                 const std::vector<Complex>& poles) {
  const Eigen::Index d = A.rows();
  // Characteristic polynomial coefficients, highest degree first.
  std::vector<Complex> coeffs{1.0};
  for (const Complex& p : poles) {
    std::vector<Complex> next(coeffs.size() + 1, 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      next[i] += coeffs[i];
      next[i + 1] -= p * coeffs[i];
    }
    coeffs = std::move(next);
  }
  Matrix phi = Matrix::Zero(d, d);
  for (const Complex& c : coeffs) phi = phi * A + c.real() * Matrix::Identity(d, d);
  const Matrix ctrb = LinearSystem(A, B).KalmanMatrix();
  Eigen::RowVectorXd last = Eigen::RowVectorXd::Zero(d);
  last[d - 1] = 1.0;
  const Eigen::RowVectorXd row =
      ctrb.transpose().partialPivLu().solve(last.transpose()).transpose();
  return -(row * phi);
}

// Real Jordan matrix whose spectrum is `poles`. Complex pairs become 2x2
// rotation-scaling blocks; repeated entries are chained with identity
// superdiagonal blocks, at most `inputs` chains per distinct entry.
Matrix JordanMatrix(const std::vector<Complex>& poles, int inputs) {
  struct Atom {
    Complex value;
    int count;
  };
  std::vector<Atom> atoms;
  for (const Complex& p : poles) {
    if (p.imag() < -1e-12) continue;
    const Complex key = p.imag() > 1e-12 ? p : Complex(p.real(), 0.0);
    auto it = std::find_if(atoms.begin(), atoms.end(), [&](const Atom& a) {
      return std::abs(a.value - key) <= 1e-9 * (1.0 + std::abs(key));
    });
    if (it == atoms.end()) {
      atoms.push_back({key, 1});
    } else {
      ++it->count;
    }
  }
  const Eigen::Index d = static_cast<Eigen::Index>(poles.size());
  Matrix lam = Matrix::Zero(d, d);
  Eigen::Index pos = 0;
  for (const Atom& atom : atoms) {
    const bool cplx = atom.value.imag() != 0.0;
    const int size = cplx ? 2 : 1;
    Matrix block(size, size);
    if (cplx) {
      block << atom.value.real(), atom.value.imag(), -atom.value.imag(),
          atom.value.real();
    } else {
      block << atom.value.real();
    }
    const int chains = std::min(atom.count, inputs);
    for (int c = 0; c < chains; ++c) {
      const int length = atom.count / chains + (c < atom.count % chains ? 1 : 0);
      for (int l = 0; l < length; ++l) {
        lam.block(pos, pos, size, size) = block;
        if (l + 1 < length) {
          lam.block(pos, pos + size, size, size) =
              Matrix::Identity(size, size);
        }
        pos += size;
      }
    }
  }
  return lam;
}

// Coefficient mismatch between det(sI - M) and prod (s - p_i), relative to
// the largest desired coefficient.
double CharPolyMismatch(const Matrix& m, const std::vector<Complex>& poles) {
  Eigen::EigenSolver<Matrix> es(m, false);
  auto poly = [](const std::vector<Complex>& roots) {
    std::vector<Complex> c{1.0};
    for (const Complex& r : roots) {
      std::vector<Complex> next(c.size() + 1, 0.0);
      for (std::size_t i = 0; i < c.size(); ++i) {
        next[i] += c[i];
        next[i + 1] -= r * c[i];
      }
      c = std::move(next);
    }
    return c;
  };
  std::vector<Complex> actual_roots;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    actual_roots.push_back(es.eigenvalues()[i]);
  }
  const auto want = poly(poles);
  const auto got = poly(actual_roots);
  double scale = 0.0;
  double diff = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    scale = std::max(scale, std::abs(want[i]));
    diff = std::max(diff, std::abs(want[i] - got[i]));
  }
  return diff / scale;
}

}  // namespace

Matrix PlacePoles(const Matrix& A, const Matrix& B,
                  const std::vector<Complex>& poles, std::uint64_t seed) {
  const LinearSystem sys(A, B);
  const Eigen::Index d = A.rows();
  if (static_cast<Eigen::Index>(poles.size()) != d) {
    throw ConfigError("place_poles: need exactly d poles");
  }
  for (const Complex& p : poles) {
    if (std::abs(p.imag()) <= 1e-12) continue;
    const auto conj_count = std::count_if(poles.begin(), poles.end(), [&](const Complex& q) {
      return std::abs(q - std::conj(p)) <= 1e-9 * (1.0 + std::abs(p));
    });
    const auto self_count = std::count_if(poles.begin(), poles.end(), [&](const Complex& q) {
      return std::abs(q - p) <= 1e-9 * (1.0 + std::abs(p));
    });
    if (conj_count != self_count) {
      throw ConfigError("place_poles: pole list is not closed under conjugation");
    }
  }
  if (!sys.Controllable()) {
    throw UncontrollablePairError("place_poles: (A, B) is not controllable");
  }
  if (B.cols() == 1) return Ackermann(A, B, poles);

  const Matrix lam = JordanMatrix(poles, static_cast<int>(B.cols()));
  const Matrix ident = Matrix::Identity(d, d);
  // vec(AX - X L) = (I kron A - L^T kron I) vec(X).
  Matrix sylvester(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      sylvester.block(i * d, j * d, d, d) =
          (i == j ? A : Matrix::Zero(d, d)) - lam(j, i) * ident;
    }
  }
  Eigen::FullPivLU<Matrix> lu(sylvester);
  if (!lu.isInvertible()) {
    throw ConfigError("place_poles: requested poles overlap the open-loop spectrum");
  }
  RngStream rng(seed, "place_poles");
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix g(B.cols(), d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.Normal();
    const Matrix rhs = -B * g;
    const Vector vec_x = lu.solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()));
    const Matrix x = Eigen::Map<const Matrix>(vec_x.data(), d, d);
    Eigen::JacobiSVD<Matrix> svd(x);
    const auto& s = svd.singularValues();
    if (s[d - 1] <= 1e-10 * s[0]) continue;
    const Matrix k = g * x.partialPivLu().inverse();
    if (CharPolyMismatch(A + B * k, poles) <= 1e-8) return k;
  }
  throw Error("place_poles: eigenstructure assignment failed to converge");
}

SteeringPair BrockettSteerPair(const Vector& x, const Vector& y, int n_grid) {
  RequireDim(x, 3, "brockett_steer_pair x");
  RequireDim(y, 3, "brockett_steer_pair y");
  if (n_grid < 4) throw ConfigError("brockett_steer_pair: n_grid must be >= 4");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const auto sys = BuiltinSystem("brockett");
  const int n1 = n_grid / 2;
  const int n2 = n_grid - n1;

  const Vector u_first = Eigen::Vector2d((y[0] - x[0]) / two_pi,
                                         (y[1] - x[1]) / two_pi);
  const auto grid1 = UniformGrid(0.0, two_pi, n1);
  const Matrix s1 = IntegrateRk4(
      [&](double, const Vector& z) { return sys.Eval(z, u_first); }, grid1, x);
  const Vector mid = s1.row(n1 - 1).transpose();
  const double c = (y[2] - mid[2]) / std::numbers::pi;
  auto u_second = [c](double t) -> Vector {
    return Eigen::Vector2d(std::sin(t), c * std::cos(t));
  };
  const auto grid2 = UniformGrid(two_pi, 2.0 * two_pi, n2);
  const Matrix s2 = IntegrateRk4(
      [&](double t, const Vector& z) { return sys.Eval(z, u_second(t)); },
      grid2, mid);

  SteeringPair out;
  auto& pair = out.pair;
  pair.times = grid1;
  pair.times.insert(pair.times.end(), grid2.begin(), grid2.end());
  pair.states.resize(n_grid, 3);
  pair.states << s1, s2;
  pair.controls.resize(n_grid, 2);
  for (int k = 0; k < n1; ++k) pair.controls.row(k) = u_first.transpose();
  for (int k = 0; k < n2; ++k) {
    pair.controls.row(n1 + k) = u_second(grid2[k]).transpose();
  }
  out.terminal_error = (pair.FinalState() - y).norm();
  return out;
}

}  // namespace ctrlflow
