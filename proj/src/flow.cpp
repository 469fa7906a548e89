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

#include "ctrlflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>

namespace ctrlflow {

ClosedLoopPath IntegrateClosedLoop(const ControlAffineSystem& sys,
                                   const ControlLaw& law, const Vector& z0,
                                   double horizon, int n_grid,
                                   Direction direction) {
  RequireDim(z0, sys.state_dim(), "closed-loop start");
  if (n_grid < 2 || !(horizon > 0.0)) throw ConfigError("closed loop: need n_grid >= 2 and T > 0");
  const bool forward = direction == Direction::kForward;
  const double s = forward ? 1.0 : -1.0;
  bool flagged = false;
  auto control = [&](double t, const Vector& z) {
    Prediction pred = law.Predict(forward ? t : horizon - t, z);
    flagged = flagged || pred.extrapolated;
    return pred.u;
  };
  auto field = [&](double t, const Vector& z) { return Vector(s * sys.Eval(z, control(t, z))); };

  ClosedLoopPath out;
  auto& pair = out.pair;
  pair.times = UniformGrid(0.0, horizon, n_grid);
  pair.states.resize(n_grid, sys.state_dim());
  pair.controls.resize(n_grid, sys.control_dim());
  Vector z = z0;
  for (int k = 0; k < n_grid; ++k) {
    flagged = false;
    const double t = pair.times[k];
    pair.states.row(k) = z.transpose();
    const Vector u = control(t, z);
    pair.controls.row(k) = u.transpose();
    if (k + 1 == n_grid) {
      if (flagged) ++out.extrapolated_steps;
      break;
    }
    const double h = pair.times[k + 1] - t;
    const Vector k1 = s * sys.Eval(z, u);
    const Vector k2 = field(t + 0.5 * h, z + 0.5 * h * k1);
    const Vector k3 = field(t + 0.5 * h, z + 0.5 * h * k2);
    const Vector k4 = field(t + h, z + h * k3);
    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (flagged) ++out.extrapolated_steps;
    if (!z.allFinite() || z.norm() > kBlowUpThreshold) {
      throw BlowUpError(pair.times[k + 1], "closed-loop integration blew up");
    }
  }
  return out;
}

std::vector<EmpiricalMeasure> MarginalSnapshots(
    const std::vector<TrajectoryControlPair>& pairs,
    const std::vector<double>& times) {
  std::vector<EmpiricalMeasure> out;
  const Eigen::Index d = pairs.empty() ? 0 : pairs.front().states.cols();
  for (double t : times) {
    Matrix pts(static_cast<Eigen::Index>(pairs.size()), d);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pts.row(static_cast<Eigen::Index>(i)) = pairs[i].StateAt(t).transpose();
    }
    out.push_back(EmpiricalMeasure::Uniform(std::move(pts), 0, "snapshot"));
  }
  return out;
}

RolloutBatch RolloutFrom(const ControlAffineSystem& sys, const ControlLaw& law,
                         const std::vector<Vector>& starts, double horizon,
                         int n_grid, Direction direction) {
  std::vector<std::optional<ClosedLoopPath>> slots(starts.size());
  ParallelFor(starts.size(), [&](std::size_t i) {
    try {
      slots[i] = IntegrateClosedLoop(sys, law, starts[i], horizon, n_grid, direction);
    } catch (const BlowUpError&) {
      slots[i].reset();
    }
  });
  RolloutBatch out;
  out.starts = starts;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) {
      ++out.excluded;
      continue;
    }
    out.extrapolated_steps += slots[i]->extrapolated_steps;
    out.pairs.push_back(std::move(slots[i]->pair));
    out.kept_index.push_back(i);
  }
  return out;
}

RolloutBatch ResampleAndReverse(const ControlAffineSystem& sys,
                                const ControlLaw& law,
                                const PointSampler& terminal_sampler, int n,
                                double horizon, int n_grid, std::uint64_t seed) {
  if (n < 0) throw ConfigError("resample: negative sample count");
  std::vector<Vector> starts;
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, "terminal", static_cast<std::uint64_t>(i));
    starts.push_back(terminal_sampler(rng));
  }
  // Noising ran x' = -f; reversing that closed loop gives z' = +f.
  return RolloutFrom(sys.TimeReversed(), law, starts, horizon, n_grid,
                     Direction::kReversed);
}

SensitivityReport CheckSensitivity(const ControlAffineSystem& sys,
                                   const ControlLaw& law, const Vector& z0,
                                   double horizon, int n_grid,
                                   Direction direction, double perturbation) {
  const auto base = IntegrateClosedLoop(sys, law, z0, horizon, n_grid, direction);
  const Vector offset = Vector::Constant(z0.size(), perturbation / std::sqrt(double(z0.size())));
  const auto moved = IntegrateClosedLoop(sys, law, z0 + offset, horizon, n_grid, direction);
  SensitivityReport rep;
  rep.growth = (moved.pair.FinalState() - base.pair.FinalState()).norm() / offset.norm();

  const bool forward = direction == Direction::kForward;
  const double s = forward ? 1.0 : -1.0;
  auto field = [&](double t, const Vector& z) {
    return Vector(s * sys.Eval(z, law.Predict(forward ? t : horizon - t, z).u));
  };
  double slope = 0.0;
  const int stride = std::max(1, n_grid / 64);
  for (int k = 0; k < n_grid; k += stride) {
    const double t = base.pair.times[k];
    const Vector z = base.pair.State(static_cast<std::size_t>(k));
    const Vector fz = field(t, z);
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      Vector zj = z;
      zj[j] += perturbation;
      slope = std::max(slope, (field(t, zj) - fz).norm() / perturbation);
    }
  }
  rep.bound = std::exp(slope * horizon);
  rep.warning = !(rep.growth <= 2.0 * rep.bound);
  return rep;
}

void WriteSnapshotCsv(const EmpiricalMeasure& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "sample_id";
  for (Eigen::Index i = 0; i < m.dim(); ++i) out << ",x_" << i + 1;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.size(); ++r) {
    out << r;
    for (Eigen::Index i = 0; i < m.dim(); ++i) out << ',' << m.points(r, i);
    out << '\n';
  }
}

}  // namespace ctrlflow
