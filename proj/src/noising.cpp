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

#include "ctrlflow/noising.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace ctrlflow {

void QuadraticCost::Validate() const {
  if (!(theta > 0.0) || !std::isfinite(theta)) {
    throw ConfigError("cost weight theta must be positive");
  }
}

AdjointSign ParseAdjointSign(const std::string& name) {
  if (name == "canonical") return AdjointSign::kCanonical;
  if (name == "paper") return AdjointSign::kPaper;
  throw ConfigError("unknown adjoint_sign '" + name + "' (canonical|paper)");
}

std::string ToString(AdjointSign sign) {
  return sign == AdjointSign::kCanonical ? "canonical" : "paper";
}

Vector PmpOptimalControl(const ControlAffineSystem& sys,
                         const QuadraticCost& cost, const Vector& x,
                         const Vector& p) {
  RequireDim(x, sys.state_dim(), "pmp state");
  RequireDim(p, sys.state_dim(), "pmp costate");
  return sys.ControlMatrix(x).transpose() * p / (2.0 * cost.theta);
}

double PmpHamiltonian(const ControlAffineSystem& sys, const QuadraticCost& cost,
                      const Vector& x, const Vector& p) {
  const Vector u = PmpOptimalControl(sys, cost, x, p);
  return -p.dot(sys.Eval(x, u)) + cost.theta * u.squaredNorm();
}

double PmpExtremal::MaxHamiltonianDrift() const {
  double worst = 0.0;
  for (double h : hamiltonian) worst = std::max(worst, std::abs(h - hamiltonian.front()));
  return worst;
}

PmpExtremal PmpExtremalPath(const ControlAffineSystem& sys,
                            const QuadraticCost& cost, const Vector& x0,
                            const Vector& p0, double horizon, int n_grid,
                            AdjointSign /*sign*/) {
  // The running cost theta |u|^2 has no state gradient, so both adjoint
  // sign conventions produce the same costate equation.
  cost.Validate();
  const int d = sys.state_dim();
  RequireDim(x0, d, "pmp initial state");
  RequireDim(p0, d, "pmp initial costate");
  if (n_grid < 2 || !(horizon > 0.0)) throw ConfigError("pmp extremal: need n_grid >= 2 and T > 0");
  if (!x0.allFinite() || !p0.allFinite()) throw ConfigError("pmp extremal: non-finite input");

  const TimeField rhs = [&](double, const Vector& y) {
    const Vector w = y.head(d);
    const Vector p = y.tail(d);
    const Vector u = PmpOptimalControl(sys, cost, w, p);
    Vector dy(2 * d);
    dy.head(d) = -sys.Eval(w, u);
    dy.tail(d) = sys.StateJacobian(w, u).transpose() * p;
    return dy;
  };
  const auto grid = UniformGrid(0.0, horizon, n_grid);
  Vector y0(2 * d);
  y0 << x0, p0;
  const Matrix ys = IntegrateRk4(rhs, grid, y0);

  PmpExtremal out;
  out.pair.times = grid;
  out.pair.states = ys.leftCols(d);
  out.costates = ys.rightCols(d);
  out.pair.controls.resize(n_grid, sys.control_dim());
  for (int k = 0; k < n_grid; ++k) {
    const Vector w = out.pair.states.row(k).transpose();
    const Vector p = out.costates.row(k).transpose();
    out.pair.controls.row(k) = PmpOptimalControl(sys, cost, w, p).transpose();
    out.hamiltonian.push_back(PmpHamiltonian(sys, cost, w, p));
  }
  return out;
}

Vector ExpMap(const ControlAffineSystem& sys, const QuadraticCost& cost,
              const Vector& x, double t, const Vector& p0, int n_grid) {
  if (t == 0.0) return x;
  return PmpExtremalPath(sys, cost, x, p0, t, n_grid).pair.FinalState();
}

Direction ParseDirection(const std::string& name) {
  if (name == "forward") return Direction::kForward;
  if (name == "reversed") return Direction::kReversed;
  throw ConfigError("unknown direction '" + name + "' (forward|reversed)");
}

std::string ToString(Direction direction) {
  return direction == Direction::kForward ? "forward" : "reversed";
}

BrownianControlPath SampleBrownianControl(int m, double horizon, int n_grid,
                                          double sigma, std::uint64_t seed,
                                          std::uint64_t index) {
  if (n_grid < 2) throw ConfigError("brownian control: n_grid must be >= 2");
  if (m < 1 || !(horizon > 0.0) || !(sigma >= 0.0)) {
    throw ConfigError("brownian control: need m >= 1, T > 0, sigma >= 0");
  }
  BrownianControlPath path;
  path.times = UniformGrid(0.0, horizon, n_grid);
  path.values = Matrix::Zero(n_grid, m);
  RngStream rng(seed, "brownian", index);
  for (int k = 1; k < n_grid; ++k) {
    const double dt = path.times[k] - path.times[k - 1];
    const double scale = sigma * std::sqrt(dt);
    for (int i = 0; i < m; ++i) {
      path.values(k, i) = path.values(k - 1, i) + scale * rng.Normal();
    }
  }
  return path;
}

TrajectoryControlPair EndpointMap(const ControlAffineSystem& sys,
                                  const Vector& x0, const ControlPath& control,
                                  Direction direction) {
  const int d = sys.state_dim();
  const auto n = control.times.size();
  RequireDim(x0, d, "endpoint map initial state");
  if (n < 2 || control.values.rows() != static_cast<Eigen::Index>(n) ||
      control.values.cols() != sys.control_dim()) {
    throw DimensionError("endpoint map: control path shape mismatch");
  }
  const double s = direction == Direction::kForward ? 1.0 : -1.0;
  TrajectoryControlPair out;
  out.times = control.times;
  out.controls = control.values;
  out.states.resize(static_cast<Eigen::Index>(n), d);
  Vector x = x0;
  out.states.row(0) = x.transpose();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double h = control.times[k + 1] - control.times[k];
    if (h > 0.0) {
      const Vector u0 = control.values.row(k).transpose();
      const Vector u1 = control.values.row(k + 1).transpose();
      const Vector um = 0.5 * (u0 + u1);
      const Vector k1 = s * sys.Eval(x, u0);
      const Vector k2 = s * sys.Eval(x + 0.5 * h * k1, um);
      const Vector k3 = s * sys.Eval(x + 0.5 * h * k2, um);
      const Vector k4 = s * sys.Eval(x + h * k3, u1);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite() || x.norm() > kBlowUpThreshold) {
        throw BlowUpError(control.times[k + 1], "endpoint map blew up");
      }
    }
    out.states.row(static_cast<Eigen::Index>(k + 1)) = x.transpose();
  }
  return out;
}

ControlPath ControlsOf(const TrajectoryControlPair& pair) {
  return {pair.times, pair.controls};
}

nlohmann::json NoisingResult::Metadata() const {
  return {{"kept", trajectories.size()},
          {"excluded", excluded},
          {"triples", dataset.size()},
          {"max_hamiltonian_drift", max_hamiltonian_drift}};
}

NoisingResult GenerateNoisingDataset(const ControlAffineSystem& sys,
                                     const NoisingConfig& config) {
  const int d = sys.state_dim();
  config.cost.Validate();
  config.start.Validate();
  if (config.start.Dim() != d) throw DimensionError("noising: start measure dimension mismatch");
  if (config.n_samples < 0 || config.n_grid < 2 || config.n_sample_times < 2 ||
      !(config.horizon > 0.0) || !(config.costate_scale >= 0.0) || !(config.sigma >= 0.0)) {
    throw ConfigError("noising: invalid sample count, grid, horizon or scale");
  }

  const auto n = static_cast<std::size_t>(config.n_samples);
  std::vector<std::optional<TrajectoryControlPair>> slots(n);
  std::vector<double> drift(n, 0.0);
  ParallelFor(n, [&](std::size_t i) {
    RngStream start_rng(config.seed, "noising_start", i);
    const Vector x0 = config.start.Draw(start_rng);
    try {
      if (config.mode == NoisingConfig::Mode::kPmp) {
        RngStream costate_rng(config.seed, "costate", i);
        const Vector p0 = config.costate_scale * costate_rng.NormalVector(d);
        auto ext = PmpExtremalPath(sys, config.cost, x0, p0, config.horizon,
                                   config.n_grid, config.adjoint_sign);
        drift[i] = ext.MaxHamiltonianDrift();
        slots[i] = std::move(ext.pair);
      } else {
        const auto path = SampleBrownianControl(sys.control_dim(), config.horizon,
                                                config.n_grid, config.sigma,
                                                config.seed, i);
        slots[i] = EndpointMap(sys, x0, path, Direction::kReversed);
      }
    } catch (const BlowUpError&) {
      slots[i].reset();
    }
  });

  NoisingResult out;
  const auto sample_times = UniformGrid(0.0, config.horizon, config.n_sample_times);
  for (std::size_t i = 0; i < n; ++i) {
    if (!slots[i]) {
      ++out.excluded;
      continue;
    }
    AppendTrajectory(out.dataset, *slots[i], static_cast<std::int64_t>(i), sample_times);
    out.trajectories.push_back(std::move(*slots[i]));
    out.kept_index.push_back(i);
    out.max_hamiltonian_drift = std::max(out.max_hamiltonian_drift, drift[i]);
  }
  return out;
}

}  // namespace ctrlflow
