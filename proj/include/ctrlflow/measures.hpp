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

#ifndef CTRLFLOW_MEASURES_HPP_
#define CTRLFLOW_MEASURES_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrlflow/common.hpp"

namespace ctrlflow {

// Weighted point cloud in R^k; row i of `points` carries weights[i].
struct EmpiricalMeasure {
  Matrix points;  // N x k
  Vector weights;
  std::uint64_t seed = 0;
  std::string spec;

  static EmpiricalMeasure Uniform(Matrix points, std::uint64_t seed = 0,
                                  std::string spec = "empirical");

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  Vector Point(Eigen::Index i) const { return points.row(i).transpose(); }
  bool HasUniformWeights(double tol = 1e-12) const;
  void Validate() const;
};

// Parameterizations:
//   gaussian:        mean (k), std (scalar or k entries, >= 0)
//   uniform_box:     low (k), high (k)
//   uniform_sphere:  center (k), radius; uniform on the sphere |x - c| = r
//   dirac:           point (k)
//   mixture:         components (list of specs), weights (optional)
struct MeasureSpec {
  enum class Kind { kGaussian, kUniformBox, kUniformSphere, kDirac, kMixture };
  Kind kind = Kind::kGaussian;
  Vector mean, std_dev, low, high, center, point;
  double radius = 1.0;
  std::vector<MeasureSpec> components;
  std::vector<double> mixture_weights;

  int Dim() const;
  void Validate() const;
  Vector Draw(RngStream& rng) const;

  static MeasureSpec FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
};

EmpiricalMeasure SampleMeasure(const MeasureSpec& spec, int n,
                               std::uint64_t seed);

struct Coupling {
  Matrix first;   // N x k0
  Matrix second;  // N x k1
  Vector weights;
  double cost = 0.0;  // summed squared distance of the pairs
  Eigen::Index size() const { return first.rows(); }
};

enum class CouplingKind { kIndependent, kPaired, kOtMatched };
CouplingKind ParseCouplingKind(const std::string& name);
std::string ToString(CouplingKind kind);

// independent: both sides resampled (with replacement for the smaller one) to
// a common N and joined by a random bijection; paired: index aligned;
// ot_matched: exact squared-Euclidean optimal assignment.
Coupling BuildCoupling(const EmpiricalMeasure& mu0, const EmpiricalMeasure& muT,
                       CouplingKind kind, std::uint64_t seed);

// Minimum-cost perfect matching for a square cost matrix by shortest
// augmenting paths with dual potentials (O(n^3)). Returns col[i] assigned to
// row i.
std::vector<int> SolveAssignment(const Matrix& cost);

inline constexpr Eigen::Index kExactW2Limit = 2048;

// Exact W2 between equal-size, uniformly weighted measures.
double Wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

// Sliced W2: sqrt(k * mean_theta W2^2(<theta, a>, <theta, b>)) over random
// unit directions theta. The factor k = dim makes the estimate exact for pure
// translations, and for k = 1 it coincides with exact W2.
double SlicedWasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                          int n_projections, std::uint64_t seed);

// W2 with automatic fallback to the sliced estimate above kExactW2Limit.
struct W2Result {
  double value = 0.0;
  bool sliced = false;
};
W2Result Wasserstein2Auto(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                          std::uint64_t seed = 0);

EmpiricalMeasure Pushforward(const EmpiricalMeasure& a,
                             const std::function<Vector(const Vector&)>& h);

// Weighted merge: sum_i c_i a_i with c normalized to 1.
EmpiricalMeasure Merge(const std::vector<EmpiricalMeasure>& parts,
                       const std::vector<double>& mixing);

// Fraction of a's points within `radius` of some point of b.
double SupportInclusionScore(const EmpiricalMeasure& a,
                             const EmpiricalMeasure& b, double radius);

// Mean distance between independent draws of a and b (all pairs).
double MeanCrossDistance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

// CSV (header x_1..x_k) plus a JSON sidecar with weights, seed and spec.
void WriteMeasure(const EmpiricalMeasure& m, const std::string& csv_path,
                  const std::string& sidecar_path);

}  // namespace ctrlflow

#endif  // CTRLFLOW_MEASURES_HPP_
