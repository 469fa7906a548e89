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

#include "ctrlflow/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ctrlflow {

namespace {

// Index k with times[k] <= t < times[k+1], using the last copy of a repeated
// knot; clamps to the ends.
std::size_t LocateInterval(const std::vector<double>& times, double t) {
  if (t <= times.front()) {
    // Right limit at a discontinuity sitting on the first knot.
    std::size_t k = 0;
    while (k + 1 < times.size() && times[k + 1] == times.front()) ++k;
    return k;
  }
  auto it = std::upper_bound(times.begin(), times.end(), t);
  return static_cast<std::size_t>(std::distance(times.begin(), it)) - 1;
}

Vector InterpolateRows(const std::vector<double>& times, const Matrix& rows,
                       double t) {
  const std::size_t k = LocateInterval(times, t);
  if (k + 1 >= times.size()) return rows.row(times.size() - 1).transpose();
  const double span = times[k + 1] - times[k];
  const double s = span > 0.0 ? std::clamp((t - times[k]) / span, 0.0, 1.0) : 0.0;
  return ((1.0 - s) * rows.row(k) + s * rows.row(k + 1)).transpose();
}

bool Escaped(const Vector& x, double blowup) {
  return !x.allFinite() || x.norm() > blowup;
}

}  // namespace

Vector TrajectoryControlPair::StateAt(double t) const {
  return InterpolateRows(times, states, t);
}

Vector TrajectoryControlPair::ControlAt(double t) const {
  return InterpolateRows(times, controls, t);
}

void TrajectoryControlPair::Validate() const {
  const auto n = static_cast<Eigen::Index>(times.size());
  if (n < 2) throw ConfigError("trajectory needs at least two grid points");
  if (states.rows() != n || controls.rows() != n) {
    throw ConfigError("trajectory: states and controls must match the grid");
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (times[k] < times[k - 1]) {
      throw ConfigError("trajectory: time grid must be nondecreasing");
    }
    if (k >= 2 && times[k] == times[k - 1] && times[k - 1] == times[k - 2]) {
      throw ConfigError("trajectory: a knot may be repeated at most once");
    }
  }
  if (!(times.back() > times.front())) {
    throw ConfigError("trajectory: horizon must be positive");
  }
}

std::vector<double> UniformGrid(double t0, double t1, int n_points) {
  if (n_points < 2) throw ConfigError("grid needs at least two points");
  std::vector<double> grid(n_points);
  const double h = (t1 - t0) / (n_points - 1);
  for (int k = 0; k < n_points; ++k) grid[k] = t0 + k * h;
  grid.back() = t1;
  return grid;
}

Matrix IntegrateRk4(const TimeField& rhs, const std::vector<double>& grid,
                    const Vector& x0, double blowup) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Matrix out(n, x0.size());
  Vector x = x0;
  if (Escaped(x, blowup)) {
    throw BlowUpError(grid.front(), "initial state is not finite or too large");
  }
  out.row(0) = x.transpose();
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double t = grid[k];
    const double h = grid[k + 1] - t;
    if (h > 0.0) {
      const Vector k1 = rhs(t, x);
      const Vector k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
      const Vector k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
      const Vector k4 = rhs(t + h, x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (Escaped(x, blowup)) {
      std::ostringstream msg;
      msg << "integration blew up at t=" << grid[k + 1];
      throw BlowUpError(grid[k + 1], msg.str());
    }
    out.row(k + 1) = x.transpose();
  }
  return out;
}

double DynamicsResidual(const ControlAffineSystem& sys,
                        const TrajectoryControlPair& pair, double sign) {
  pair.Validate();
  // Stage controls interpolate within the step so that each interval only
  // sees its own endpoints, even at repeated knots.
  const Eigen::Index n = static_cast<Eigen::Index>(pair.size());
  Matrix re(n, pair.states.cols());
  Vector x = pair.InitialState();
  re.row(0) = x.transpose();
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double t = pair.times[k];
    const double h = pair.times[k + 1] - t;
    if (h > 0.0) {
      const Vector u0 = pair.Control(k);
      const Vector u1 = pair.Control(k + 1);
      const Vector um = 0.5 * (u0 + u1);
      const Vector k1 = sign * sys.Eval(x, u0);
      const Vector k2 = sign * sys.Eval(x + 0.5 * h * k1, um);
      const Vector k3 = sign * sys.Eval(x + 0.5 * h * k2, um);
      const Vector k4 = sign * sys.Eval(x + h * k3, u1);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    re.row(k + 1) = x.transpose();
  }
  const double scale = 1.0 + pair.states.rowwise().norm().maxCoeff();
  return (re - pair.states).rowwise().norm().maxCoeff() / scale;
}

void WritePairCsv(const TrajectoryControlPair& pair, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "t";
  for (Eigen::Index i = 0; i < pair.states.cols(); ++i) out << ",x_" << i + 1;
  for (Eigen::Index i = 0; i < pair.controls.cols(); ++i) out << ",u_" << i + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < pair.size(); ++k) {
    out << pair.times[k];
    for (Eigen::Index i = 0; i < pair.states.cols(); ++i) {
      out << ',' << pair.states(k, i);
    }
    for (Eigen::Index i = 0; i < pair.controls.cols(); ++i) {
      out << ',' << pair.controls(k, i);
    }
    out << '\n';
  }
}

TrajectoryControlPair ReadPairCsv(const std::string& path, int state_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  const auto columns = std::count(line.begin(), line.end(), ',') + 1;
  const int control_dim = static_cast<int>(columns) - 1 - state_dim;
  if (control_dim < 0) throw ConfigError("pair CSV has too few columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<long>(row.size()) != columns) {
      throw ConfigError("pair CSV: ragged row");
    }
    rows.push_back(std::move(row));
  }
  TrajectoryControlPair pair;
  const auto n = static_cast<Eigen::Index>(rows.size());
  pair.states.resize(n, state_dim);
  pair.controls.resize(n, control_dim);
  for (Eigen::Index k = 0; k < n; ++k) {
    pair.times.push_back(rows[k][0]);
    for (int i = 0; i < state_dim; ++i) pair.states(k, i) = rows[k][1 + i];
    for (int i = 0; i < control_dim; ++i) {
      pair.controls(k, i) = rows[k][1 + state_dim + i];
    }
  }
  return pair;
}

}  // namespace ctrlflow
