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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ctrlflow/measures.hpp"
#include "ctrlflow/systems.hpp"

namespace ctrlflow {
namespace {

EmpiricalMeasure Random(int n, int d, std::uint64_t seed, double shift = 0.0) {
  RngStream rng(seed, "points");
  Matrix p(n, d);
  for (int i = 0; i < n; ++i) p.row(i) = (rng.NormalVector(d).array() + shift).matrix().transpose();
  return EmpiricalMeasure::Uniform(p);
}

double BruteForceW2(const Matrix& a, const Matrix& b) {
  std::vector<int> perm(a.rows());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) c += (a.row(i) - b.row(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / a.rows());
}

MeasureSpec Spec(const std::string& json) { return MeasureSpec::FromJson(nlohmann::json::parse(json)); }

std::vector<std::vector<double>> Rows(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Sample, DiracRepeatsPoint) {
  const auto m = SampleMeasure(Spec(R"({"type": "dirac", "point": [1, -2]})"), 5, 0);
  ASSERT_EQ(m.size(), 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(m.points.row(i), (Eigen::RowVector2d(1, -2)));
}

TEST(Sample, SphereHasUnitNorm) {
  const auto m = SampleMeasure(Spec(R"({"type": "uniform_sphere", "center": [0, 0, 0], "radius": 1})"), 500, 1);
  EXPECT_LE((m.points.rowwise().norm().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Sample, GaussianMeanNearZero) {
  const auto m = SampleMeasure(Spec(R"({"type": "gaussian", "mean": [0, 0, 0], "std": 1})"), 10000, 2);
  EXPECT_LE(m.points.colwise().mean().cwiseAbs().maxCoeff(), 0.05);
}

TEST(Sample, BoxAndMixtureStayInSupport) {
  const auto box = SampleMeasure(Spec(R"({"type": "uniform_box", "low": [-1, 2], "high": [0, 3]})"), 300, 3);
  EXPECT_GE(box.points.col(0).minCoeff(), -1.0);
  EXPECT_LE(box.points.col(1).maxCoeff(), 3.0);
  const auto mix = SampleMeasure(Spec(R"({"type": "mixture", "components": [
      {"type": "dirac", "point": [0]}, {"type": "dirac", "point": [5]}], "weights": [0.5, 0.5]})"), 400, 4);
  const auto fives = (mix.points.array() == 5.0).count();
  EXPECT_GT(fives, 150);
  EXPECT_LT(fives, 250);
  EXPECT_EQ((mix.points.array() == 0.0).count() + fives, 400);
}

TEST(Sample, DeterministicAndValidated) {
  const auto spec = Spec(R"({"type": "gaussian", "mean": [1, 2], "std": [0.5, 2]})");
  EXPECT_EQ(SampleMeasure(spec, 10, 9).points, SampleMeasure(spec, 10, 9).points);
  EXPECT_THROW(SampleMeasure(spec, 0, 9), ConfigError);
  EXPECT_THROW(Spec(R"({"type": "gaussian", "mean": [0], "std": -1})").Validate(), ConfigError);
  EXPECT_THROW(Spec(R"({"type": "blob"})"), ConfigError);
  EXPECT_THROW(Spec(R"({"type": "dirac", "point": [0], "extra": 1})"), ConfigError);
  EXPECT_EQ(MeasureSpec::FromJson(spec.ToJson()).ToJson(), spec.ToJson());
}

TEST(EmpiricalMeasure, WeightsSumToOne) {
  const auto m = Random(7, 2, 5);
  EXPECT_NEAR(m.weights.sum(), 1.0, 1e-12);
  EXPECT_TRUE(m.HasUniformWeights());
  EmpiricalMeasure bad = m;
  bad.weights[0] += 0.1;
  EXPECT_THROW(bad.Validate(), ConfigError);
}

TEST(Coupling, PairedSingle) {
  const auto a = Random(1, 2, 6), b = Random(1, 2, 7);
  const auto c = BuildCoupling(a, b, CouplingKind::kPaired, 0);
  ASSERT_EQ(c.size(), 1);
  EXPECT_EQ(c.first, a.points);
  EXPECT_EQ(c.second, b.points);
}

TEST(Coupling, OtMatchedUndoesSwap) {
  const auto a = EmpiricalMeasure::Uniform((Matrix(2, 1) << 0, 1).finished());
  const auto b = EmpiricalMeasure::Uniform((Matrix(2, 1) << 1, 0).finished());
  const auto c = BuildCoupling(a, b, CouplingKind::kOtMatched, 0);
  EXPECT_EQ(c.cost, 0.0);
  EXPECT_EQ(c.first, c.second);
}

TEST(Coupling, IndependentReproducibleAndMarginalPreserving) {
  const auto a = Random(30, 2, 8), b = Random(30, 2, 9);
  const auto c1 = BuildCoupling(a, b, CouplingKind::kIndependent, 4);
  const auto c2 = BuildCoupling(a, b, CouplingKind::kIndependent, 4);
  EXPECT_EQ(c1.second, c2.second);
  EXPECT_EQ(Rows(c1.first), Rows(a.points));
  EXPECT_EQ(Rows(c1.second), Rows(b.points));
}

TEST(Coupling, PairedSizeMismatchRejected) {
  EXPECT_THROW(BuildCoupling(Random(3, 2, 1), Random(4, 2, 2), CouplingKind::kPaired, 0), ConfigError);
  EXPECT_THROW(ParseCouplingKind("greedy"), ConfigError);
}

TEST(Coupling, OtCostMatchesSquaredW2) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = Random(20, 3, 10 + s), b = Random(20, 3, 40 + s, 1.0);
    const auto c = BuildCoupling(a, b, CouplingKind::kOtMatched, 0);
    const double w = Wasserstein2(a, b);
    EXPECT_NEAR(c.cost, w * w * 20, 1e-9 * c.cost);
  }
}

TEST(W2, BasicCases) {
  const auto a = Random(10, 2, 11);
  EXPECT_EQ(Wasserstein2(a, a), 0.0);
  const auto p = EmpiricalMeasure::Uniform((Matrix(1, 2) << 0, 0).finished());
  const auto q = EmpiricalMeasure::Uniform((Matrix(1, 2) << 3, 4).finished());
  EXPECT_DOUBLE_EQ(Wasserstein2(p, q), 5.0);
  const auto s = EmpiricalMeasure::Uniform((Matrix(2, 2) << 0, 0, 1, 0).finished());
  const auto t = EmpiricalMeasure::Uniform((Matrix(2, 2) << 0, 1, 1, 1).finished());
  EXPECT_DOUBLE_EQ(Wasserstein2(s, t), 1.0);
}

TEST(W2, SizeMismatchRejected) {
  EXPECT_THROW(Wasserstein2(Random(3, 2, 1), Random(4, 2, 2)), ConfigError);
}

TEST(W2, AgreesWithBruteForce) {
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 1 + inst % 6;
    const auto a = Random(n, 3, 100 + inst), b = Random(n, 3, 300 + inst);
    EXPECT_NEAR(Wasserstein2(a, b), BruteForceW2(a.points, b.points), 1e-12);
  }
}

TEST(W2, MetricAxioms) {
  for (int inst = 0; inst < 100; ++inst) {
    const auto a = Random(16, 3, 500 + inst), b = Random(16, 3, 700 + inst, 0.5), c = Random(16, 3, 900 + inst, -0.5);
    EXPECT_EQ(Wasserstein2(a, b), Wasserstein2(b, a));
    EXPECT_LE(Wasserstein2(a, c), Wasserstein2(a, b) + Wasserstein2(b, c) + 1e-9);
  }
}

TEST(W2, PermutationOfPointsIsZeroDistance) {
  const auto a = Random(12, 2, 13);
  EXPECT_NEAR(Wasserstein2(a, EmpiricalMeasure::Uniform(a.points.colwise().reverse())), 0.0, 1e-15);
}

TEST(Sliced, IdenticalAndOneDimensional) {
  const auto a = Random(50, 2, 14);
  EXPECT_EQ(SlicedWasserstein2(a, a, 16, 0), 0.0);
  const auto p = Random(40, 1, 15), q = Random(40, 1, 16, 2.0);
  EXPECT_NEAR(SlicedWasserstein2(p, q, 1, 0), Wasserstein2(p, q), 1e-12);
}

TEST(Sliced, CloseToExactForShiftedGaussians) {
  RngStream rng(17, "shift");
  auto gaussian = [&](int n, double shift) {
    Matrix m(n, 2);
    for (int i = 0; i < n; ++i) m.row(i) << rng.Normal() + shift, rng.Normal();
    return EmpiricalMeasure::Uniform(m);
  };
  const double sliced = SlicedWasserstein2(gaussian(2048, 0), gaussian(2048, 2), 128, 1);
  const double exact = Wasserstein2(gaussian(512, 0), gaussian(512, 2));
  EXPECT_NEAR(sliced / exact, 1.0, 0.15);
}

TEST(W2Auto, SwitchesToSlicedAboveLimit) {
  EXPECT_FALSE(Wasserstein2Auto(Random(10, 2, 1), Random(10, 2, 2)).sliced);
  EXPECT_TRUE(Wasserstein2Auto(Random(kExactW2Limit + 1, 2, 1), Random(kExactW2Limit + 1, 2, 2)).sliced);
  EXPECT_TRUE(Wasserstein2Auto(Random(10, 2, 1), Random(12, 2, 2)).sliced);
}

TEST(Pushforward, IdentityProjectionAndOutputMap) {
  const auto a = Random(5, 6, 18);
  EXPECT_EQ(Pushforward(a, [](const Vector& x) { return x; }).points, a.points);
  const auto dirac = EmpiricalMeasure::Uniform((Matrix(1, 3) << 1, 2, 3).finished());
  EXPECT_EQ(Pushforward(dirac, [](const Vector& x) { return Vector(x.head(1)); }).points(0, 0), 1.0);
  const auto out = Pushforward(a, SixStateOutput);
  EXPECT_EQ(out.points.col(0), a.points.col(0));
  EXPECT_EQ(out.points.col(1), a.points.col(2));
  EXPECT_EQ(out.weights, a.weights);
}

TEST(Pushforward, CommutesWithMixing) {
  const auto a = Random(4, 3, 19), b = Random(6, 3, 20);
  const auto h = [](const Vector& x) { return Vector(x.head(2) * 2.0); };
  const auto lhs = Pushforward(Merge({a, b}, {0.3, 0.7}), h);
  const auto rhs = Merge({Pushforward(a, h), Pushforward(b, h)}, {0.3, 0.7});
  EXPECT_EQ(lhs.points, rhs.points);
  EXPECT_EQ(lhs.weights, rhs.weights);
}

TEST(SupportInclusion, Cases) {
  const auto a = Random(20, 2, 21);
  EXPECT_EQ(SupportInclusionScore(a, a, 1e-9), 1.0);
  EXPECT_EQ(SupportInclusionScore(a, Random(20, 2, 22, 100.0), 0.1), 0.0);
  const auto sub = EmpiricalMeasure::Uniform(a.points.topRows(5));
  EXPECT_EQ(SupportInclusionScore(sub, a, 1e-9), 1.0);
  EXPECT_THROW(SupportInclusionScore(a, a, 0.0), ConfigError);
}

TEST(WriteMeasure, CsvAndSidecar) {
  auto m = Random(3, 2, 23);
  m.spec = "test";
  const auto dir = std::filesystem::temp_directory_path();
  WriteMeasure(m, (dir / "ctrlflow_m.csv").string(), (dir / "ctrlflow_m.json").string());
  std::ifstream csv(dir / "ctrlflow_m.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "x_1,x_2");
  std::ifstream side(dir / "ctrlflow_m.json");
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j.at("weights").size(), 3u);
  std::filesystem::remove(dir / "ctrlflow_m.csv");
  std::filesystem::remove(dir / "ctrlflow_m.json");
}

}  // namespace
}  // namespace ctrlflow
