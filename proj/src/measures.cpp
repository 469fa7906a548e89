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

#include "ctrlflow/measures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

namespace ctrlflow {

using nlohmann::json;

EmpiricalMeasure EmpiricalMeasure::Uniform(Matrix points, std::uint64_t seed,
                                           std::string spec) {
  EmpiricalMeasure m;
  const auto n = points.rows();
  m.points = std::move(points);
  m.weights = n > 0 ? Vector::Constant(n, 1.0 / static_cast<double>(n))
                    : Vector();
  m.seed = seed;
  m.spec = std::move(spec);
  return m;
}

bool EmpiricalMeasure::HasUniformWeights(double tol) const {
  if (size() == 0) return true;
  const double w = 1.0 / static_cast<double>(size());
  return (weights.array() - w).abs().maxCoeff() <= tol;
}

void EmpiricalMeasure::Validate() const {
  if (size() < 1) throw ConfigError("empirical measure needs at least one point");
  if (weights.size() != size()) throw DimensionError("measure: one weight per point");
  if ((weights.array() < 0.0).any()) throw ConfigError("measure: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw ConfigError("measure: weights must sum to 1");
  }
}

namespace {

Vector JsonVector(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw ConfigError(std::string("measure spec: missing '") + key + "'");
  }
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(std::string("measure spec: '") + key + "' must be an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError("measure spec: non-numeric entry");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

json VectorJson(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

void RejectUnknownKeys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; })) {
      throw ConfigError("measure spec: unknown key '" + key + "'");
    }
  }
}

}  // namespace

int MeasureSpec::Dim() const {
  switch (kind) {
    case Kind::kGaussian: return static_cast<int>(mean.size());
    case Kind::kUniformBox: return static_cast<int>(low.size());
    case Kind::kUniformSphere: return static_cast<int>(center.size());
    case Kind::kDirac: return static_cast<int>(point.size());
    case Kind::kMixture: return components.empty() ? 0 : components[0].Dim();
  }
  return 0;
}

void MeasureSpec::Validate() const {
  switch (kind) {
    case Kind::kGaussian:
      if (mean.size() == 0) throw ConfigError("gaussian: empty mean");
      if (std_dev.size() != mean.size()) throw ConfigError("gaussian: std must match mean");
      if (!std_dev.allFinite() || (std_dev.array() < 0.0).any()) {
        throw ConfigError("gaussian: std must be finite and >= 0");
      }
      break;
    case Kind::kUniformBox:
      if (low.size() == 0 || low.size() != high.size()) {
        throw ConfigError("uniform_box: low/high must be nonempty and equal length");
      }
      if ((high.array() < low.array()).any()) throw ConfigError("uniform_box: high < low");
      break;
    case Kind::kUniformSphere:
      if (center.size() == 0) throw ConfigError("uniform_sphere: empty center");
      if (!(radius > 0.0)) throw ConfigError("uniform_sphere: radius must be positive");
      break;
    case Kind::kDirac:
      if (point.size() == 0) throw ConfigError("dirac: empty point");
      break;
    case Kind::kMixture: {
      if (components.empty()) throw ConfigError("mixture: no components");
      for (const auto& c : components) {
        c.Validate();
        if (c.Dim() != components[0].Dim()) throw ConfigError("mixture: dimension mismatch");
      }
      if (!mixture_weights.empty()) {
        if (mixture_weights.size() != components.size()) {
          throw ConfigError("mixture: one weight per component");
        }
        double total = 0.0;
        for (double w : mixture_weights) {
          if (!(w >= 0.0)) throw ConfigError("mixture: weights must be >= 0");
          total += w;
        }
        if (!(total > 0.0)) throw ConfigError("mixture: weights sum to zero");
      }
      break;
    }
  }
}

Vector MeasureSpec::Draw(RngStream& rng) const {
  switch (kind) {
    case Kind::kGaussian: {
      Vector z = rng.NormalVector(mean.size());
      return mean + std_dev.cwiseProduct(z);
    }
    case Kind::kUniformBox: {
      Vector x(low.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] = low[i] + (high[i] - low[i]) * rng.Uniform();
      }
      return x;
    }
    case Kind::kUniformSphere: {
      Vector z;
      do {
        z = rng.NormalVector(center.size());
      } while (z.norm() < 1e-12);
      return center + radius * z / z.norm();
    }
    case Kind::kDirac:
      return point;
    case Kind::kMixture: {
      std::vector<double> w = mixture_weights;
      if (w.empty()) w.assign(components.size(), 1.0);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double r = rng.Uniform() * total;
      std::size_t pick = 0;
      while (pick + 1 < w.size() && r >= w[pick]) {
        r -= w[pick];
        ++pick;
      }
      return components[pick].Draw(rng);
    }
  }
  return {};
}

MeasureSpec MeasureSpec::FromJson(const json& j) {
  if (!j.is_object() || !j.contains("type")) {
    throw ConfigError("measure spec must be an object with a 'type'");
  }
  MeasureSpec s;
  const std::string type = j.at("type").get<std::string>();
  if (type == "gaussian") {
    RejectUnknownKeys(j, {"type", "mean", "std"});
    s.kind = Kind::kGaussian;
    s.mean = JsonVector(j, "mean");
    if (!j.contains("std")) {
      s.std_dev = Vector::Ones(s.mean.size());
    } else if (j.at("std").is_number()) {
      s.std_dev = Vector::Constant(s.mean.size(), j.at("std").get<double>());
    } else {
      s.std_dev = JsonVector(j, "std");
    }
  } else if (type == "uniform_box") {
    RejectUnknownKeys(j, {"type", "low", "high"});
    s.kind = Kind::kUniformBox;
    s.low = JsonVector(j, "low");
    s.high = JsonVector(j, "high");
  } else if (type == "uniform_sphere") {
    RejectUnknownKeys(j, {"type", "center", "radius"});
    s.kind = Kind::kUniformSphere;
    s.center = JsonVector(j, "center");
    if (j.contains("radius")) s.radius = j.at("radius").get<double>();
  } else if (type == "dirac") {
    RejectUnknownKeys(j, {"type", "point"});
    s.kind = Kind::kDirac;
    s.point = JsonVector(j, "point");
  } else if (type == "mixture") {
    RejectUnknownKeys(j, {"type", "components", "weights"});
    s.kind = Kind::kMixture;
    for (const auto& c : j.at("components")) s.components.push_back(FromJson(c));
    if (j.contains("weights")) {
      s.mixture_weights = j.at("weights").get<std::vector<double>>();
    }
  } else {
    throw ConfigError("unknown measure type '" + type + "'");
  }
  s.Validate();
  return s;
}

json MeasureSpec::ToJson() const {
  switch (kind) {
    case Kind::kGaussian:
      return {{"type", "gaussian"}, {"mean", VectorJson(mean)}, {"std", VectorJson(std_dev)}};
    case Kind::kUniformBox:
      return {{"type", "uniform_box"}, {"low", VectorJson(low)}, {"high", VectorJson(high)}};
    case Kind::kUniformSphere:
      return {{"type", "uniform_sphere"}, {"center", VectorJson(center)}, {"radius", radius}};
    case Kind::kDirac:
      return {{"type", "dirac"}, {"point", VectorJson(point)}};
    case Kind::kMixture: {
      json comps = json::array();
      for (const auto& c : components) comps.push_back(c.ToJson());
      json out = {{"type", "mixture"}, {"components", comps}};
      if (!mixture_weights.empty()) out["weights"] = mixture_weights;
      return out;
    }
  }
  return {};
}

EmpiricalMeasure SampleMeasure(const MeasureSpec& spec, int n,
                               std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_measure: N must be >= 1");
  spec.Validate();
  Matrix pts(n, spec.Dim());
  RngStream rng(seed, "measure");
  for (int i = 0; i < n; ++i) pts.row(i) = spec.Draw(rng).transpose();
  return EmpiricalMeasure::Uniform(std::move(pts), seed, spec.ToJson().dump());
}

CouplingKind ParseCouplingKind(const std::string& name) {
  if (name == "independent") return CouplingKind::kIndependent;
  if (name == "paired") return CouplingKind::kPaired;
  if (name == "ot_matched") return CouplingKind::kOtMatched;
  throw ConfigError("unknown coupling kind '" + name + "'");
}

std::string ToString(CouplingKind kind) {
  switch (kind) {
    case CouplingKind::kIndependent: return "independent";
    case CouplingKind::kPaired: return "paired";
    case CouplingKind::kOtMatched: return "ot_matched";
  }
  return "?";
}

namespace {

Matrix SquaredDistances(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      c(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return c;
}

}  // namespace

std::vector<int> SolveAssignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("assignment: cost must be square");
  const int n = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

Coupling BuildCoupling(const EmpiricalMeasure& mu0, const EmpiricalMeasure& muT,
                       CouplingKind kind, std::uint64_t seed) {
  mu0.Validate();
  muT.Validate();
  Coupling c;
  switch (kind) {
    case CouplingKind::kPaired: {
      if (mu0.size() != muT.size()) {
        throw DimensionError("paired coupling needs equal sample counts");
      }
      c.first = mu0.points;
      c.second = muT.points;
      c.weights = mu0.weights;
      break;
    }
    case CouplingKind::kIndependent: {
      RngStream rng(seed, "coupling");
      const Eigen::Index n = std::max(mu0.size(), muT.size());
      auto resample = [&](const EmpiricalMeasure& m) {
        if (m.size() == n) return m.points;
        Matrix out(n, m.dim());
        std::discrete_distribution<Eigen::Index> pick(
            m.weights.data(), m.weights.data() + m.weights.size());
        for (Eigen::Index i = 0; i < n; ++i) out.row(i) = m.points.row(pick(rng.engine()));
        return out;
      };
      c.first = resample(mu0);
      const Matrix second = resample(muT);
      std::vector<Eigen::Index> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      c.second.resize(n, muT.dim());
      for (Eigen::Index i = 0; i < n; ++i) c.second.row(i) = second.row(perm[i]);
      c.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
      break;
    }
    case CouplingKind::kOtMatched: {
      if (mu0.size() != muT.size()) {
        throw DimensionError("ot_matched coupling needs equal sample counts");
      }
      if (!mu0.HasUniformWeights() || !muT.HasUniformWeights()) {
        throw ConfigError("ot_matched coupling needs uniform weights");
      }
      if (mu0.dim() != muT.dim()) throw DimensionError("ot_matched: dimension mismatch");
      const auto assignment = SolveAssignment(SquaredDistances(mu0.points, muT.points));
      c.first = mu0.points;
      c.second.resize(muT.size(), muT.dim());
      for (Eigen::Index i = 0; i < mu0.size(); ++i) {
        c.second.row(i) = muT.points.row(assignment[i]);
      }
      c.weights = mu0.weights;
      break;
    }
  }
  if (c.first.cols() == c.second.cols()) {
    c.cost = (c.first - c.second).rowwise().squaredNorm().sum();
  }
  return c;
}

double Wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  a.Validate();
  b.Validate();
  if (a.dim() != b.dim()) throw DimensionError("wasserstein2: dimension mismatch");
  if (a.size() != b.size() || a.size() > kExactW2Limit) {
    throw ConfigError("wasserstein2: exact mode needs equal N <= 2048; use sliced mode");
  }
  if (!a.HasUniformWeights() || !b.HasUniformWeights()) {
    throw ConfigError("wasserstein2: exact mode needs uniform weights");
  }
  const Matrix cost = SquaredDistances(a.points, b.points);
  const auto assignment = SolveAssignment(cost);
  // Summing the matched costs in sorted order makes the result exactly
  // symmetric in (a, b).
  std::vector<double> matched(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.size(); ++i) matched[i] = cost(i, assignment[i]);
  std::sort(matched.begin(), matched.end());
  const double total = std::accumulate(matched.begin(), matched.end(), 0.0);
  return std::sqrt(total / static_cast<double>(a.size()));
}

namespace {

// Squared W2 between two weighted 1-D samples via their quantile functions.
double W2Squared1D(std::vector<std::pair<double, double>> a,
                   std::vector<std::pair<double, double>> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double wa = a[0].second, wb = b[0].second;
  double total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double mass = std::min(wa, wb);
    const double diff = a[i].first - b[j].first;
    total += mass * diff * diff;
    wa -= mass;
    wb -= mass;
    if (wa <= 1e-15 && ++i < a.size()) wa = a[i].second;
    if (wb <= 1e-15 && ++j < b.size()) wb = b[j].second;
  }
  return total;
}

}  // namespace

double SlicedWasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                          int n_projections, std::uint64_t seed) {
  a.Validate();
  b.Validate();
  if (a.dim() != b.dim()) throw DimensionError("sliced_wasserstein2: dimension mismatch");
  if (n_projections < 1) throw ConfigError("sliced_wasserstein2: need >= 1 projection");
  const Eigen::Index k = a.dim();
  RngStream rng(seed, "sliced");
  std::vector<Vector> directions(n_projections);
  for (auto& theta : directions) {
    if (k == 1) {
      theta = Vector::Ones(1);
    } else {
      do {
        theta = rng.NormalVector(k);
      } while (theta.norm() < 1e-12);
      theta.normalize();
    }
  }
  std::vector<double> per_direction(n_projections);
  ParallelFor(directions.size(), [&](std::size_t p) {
    const Vector pa = a.points * directions[p];
    const Vector pb = b.points * directions[p];
    std::vector<std::pair<double, double>> va(pa.size()), vb(pb.size());
    for (Eigen::Index i = 0; i < pa.size(); ++i) va[i] = {pa[i], a.weights[i]};
    for (Eigen::Index i = 0; i < pb.size(); ++i) vb[i] = {pb[i], b.weights[i]};
    per_direction[p] = W2Squared1D(std::move(va), std::move(vb));
  });
  const double mean =
      std::accumulate(per_direction.begin(), per_direction.end(), 0.0) /
      n_projections;
  return std::sqrt(static_cast<double>(k) * mean);
}

W2Result Wasserstein2Auto(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                          std::uint64_t seed) {
  if (a.size() == b.size() && a.size() <= kExactW2Limit &&
      a.HasUniformWeights() && b.HasUniformWeights()) {
    return {Wasserstein2(a, b), false};
  }
  return {SlicedWasserstein2(a, b, 256, seed), true};
}

EmpiricalMeasure Pushforward(const EmpiricalMeasure& a,
                             const std::function<Vector(const Vector&)>& h) {
  if (a.size() == 0) return a;
  const Vector first = h(a.Point(0));
  Matrix pts(a.size(), first.size());
  pts.row(0) = first.transpose();
  for (Eigen::Index i = 1; i < a.size(); ++i) pts.row(i) = h(a.Point(i)).transpose();
  EmpiricalMeasure out = a;
  out.points = std::move(pts);
  return out;
}

EmpiricalMeasure Merge(const std::vector<EmpiricalMeasure>& parts,
                       const std::vector<double>& mixing) {
  if (parts.empty() || parts.size() != mixing.size()) {
    throw ConfigError("merge: need one mixing weight per part");
  }
  const double total = std::accumulate(mixing.begin(), mixing.end(), 0.0);
  Eigen::Index n = 0;
  for (const auto& p : parts) n += p.size();
  EmpiricalMeasure out;
  out.points.resize(n, parts[0].dim());
  out.weights.resize(n);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.points.middleRows(row, parts[i].size()) = parts[i].points;
    out.weights.segment(row, parts[i].size()) = parts[i].weights * (mixing[i] / total);
    row += parts[i].size();
  }
  out.spec = "merge";
  return out;
}

double SupportInclusionScore(const EmpiricalMeasure& a,
                             const EmpiricalMeasure& b, double radius) {
  if (!(radius > 0.0)) throw ConfigError("support_inclusion_score: radius must be positive");
  if (a.size() == 0) return 1.0;
  const double r2 = radius * radius;
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double best = (b.points.rowwise() - a.points.row(i)).rowwise().squaredNorm().minCoeff();
    if (best <= r2) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(a.size());
}

double MeanCrossDistance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Vector d = (b.points.rowwise() - a.points.row(i)).rowwise().norm();
    total += a.weights[i] * b.weights.dot(d);
  }
  return total;
}

void WriteMeasure(const EmpiricalMeasure& m, const std::string& csv_path,
                  const std::string& sidecar_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot open '" + csv_path + "' for writing");
  for (Eigen::Index j = 0; j < m.dim(); ++j) csv << (j ? "," : "") << "x_" << j + 1;
  csv << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    for (Eigen::Index j = 0; j < m.dim(); ++j) csv << (j ? "," : "") << m.points(i, j);
    csv << '\n';
  }
  json side = {{"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
               {"seed", m.seed},
               {"spec", m.spec},
               {"n", m.size()},
               {"dim", m.dim()}};
  std::ofstream out(sidecar_path);
  if (!out) throw Error("cannot open '" + sidecar_path + "' for writing");
  out << side.dump(2) << '\n';
}

}  // namespace ctrlflow
