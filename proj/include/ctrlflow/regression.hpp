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

#ifndef CTRLFLOW_REGRESSION_HPP_
#define CTRLFLOW_REGRESSION_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctrlflow/common.hpp"
#include "ctrlflow/kdtree.hpp"
#include "ctrlflow/trajectory.hpp"

namespace ctrlflow {

// Regression triples (t, x, u) with the id of the trajectory each came from.
struct RegressionDataset {
  std::vector<double> t;
  Matrix x;  // n x d
  Matrix u;  // n x m
  std::vector<std::int64_t> traj_id;

  std::size_t size() const { return t.size(); }
  int state_dim() const { return static_cast<int>(x.cols()); }
  int control_dim() const { return static_cast<int>(u.cols()); }
  void Validate() const;
  RegressionDataset Subset(const std::vector<std::size_t>& rows) const;
};

// Samples a trajectory at the given times (linear interpolation, controls
// right-continuous at jumps) and appends the triples.
void AppendTrajectory(RegressionDataset& data, const TrajectoryControlPair& pair,
                      std::int64_t id, const std::vector<double>& sample_times);

RegressionDataset MakeDataset(const std::vector<TrajectoryControlPair>& pairs,
                              const std::vector<double>& sample_times);

// CSV with header traj_id,t,x_1..x_d,u_1..u_m.
void WriteDatasetCsv(const RegressionDataset& data, const std::string& path);

struct Prediction {
  Vector u;
  bool extrapolated = false;
};

// Anything that maps (t, x) to a control.
class ControlLaw {
 public:
  virtual ~ControlLaw() = default;
  virtual Prediction Predict(double t, const Vector& x) const = 0;
};

// Wraps a plain function as a law (never flags extrapolation).
class FunctionLaw final : public ControlLaw {
 public:
  explicit FunctionLaw(std::function<Vector(double, const Vector&)> f)
      : f_(std::move(f)) {}
  Prediction Predict(double t, const Vector& x) const override {
    return {f_(t, x), false};
  }

 private:
  std::function<Vector(double, const Vector&)> f_;
};

enum class RegressionMethod { kKnn, kKernel, kMlp };
RegressionMethod ParseRegressionMethod(const std::string& name);
std::string ToString(RegressionMethod method);

struct RegressionParams {
  RegressionMethod method = RegressionMethod::kKernel;
  // knn
  int k = 8;
  // kernel: per-feature bandwidths over (time_scale * t, x). Empty means the
  // median heuristic (median pairwise |difference| / sqrt 2 per feature),
  // multiplied by bandwidth_scale.
  std::vector<double> bandwidth;
  double bandwidth_scale = 1.0;
  // Weight of time against state in the metric; <= 0 means diameter(x) / T.
  double time_scale = 0.0;
  // mlp
  std::vector<int> hidden = {64, 64};
  int steps = 3000;
  int batch_size = 64;
  double learning_rate = 0.05;
  // Off-support queries (nearest neighbour farther than factor x the median
  // distance from a training row to the nearest row of another trajectory)
  // return the mean of this many neighbours and are flagged.
  int extrapolation_k = 16;
  double extrapolation_factor = 10.0;

  void Validate() const;
  nlohmann::json ToJson() const;
  static RegressionParams FromJson(const nlohmann::json& j);
};

// Fitted estimate of the conditional mean u(t, x) = E[U_t | X_t = x].
class FeedbackLaw final : public ControlLaw {
 public:
  static FeedbackLaw Fit(const RegressionDataset& data,
                         const RegressionParams& params, std::uint64_t seed);

  Prediction Predict(double t, const Vector& x) const override;
  Vector operator()(double t, const Vector& x) const { return Predict(t, x).u; }

  // Mean squared error over a dataset.
  double Loss(const RegressionDataset& data) const;

  const RegressionParams& params() const { return params_; }
  double time_scale() const { return time_scale_; }
  const Vector& bandwidth() const { return bandwidth_; }
  double median_nn_distance() const { return median_nn_; }
  double final_training_loss() const { return final_loss_; }
  int state_dim() const { return d_; }
  int control_dim() const { return m_; }

  nlohmann::json ToJson() const;
  static FeedbackLaw FromJson(const nlohmann::json& j);

 private:
  struct Network {
    std::vector<Matrix> weights;  // layer l: out x in
    std::vector<Vector> biases;
    Vector in_mean, in_scale, out_mean, out_scale;
    Vector Forward(const Vector& features) const;
  };

  FeedbackLaw() = default;
  void Prepare();
  Vector Features(double t, const Vector& x) const;
  // Mean control of the k nearest stored features; also reports the nearest
  // distance.
  Vector KnnMean(const Vector& z, int k, double* nearest) const;
  Vector KernelMean(const Vector& z, bool* degenerate) const;
  void TrainNetwork(std::uint64_t seed);

  RegressionParams params_;
  int d_ = 0;
  int m_ = 0;
  double time_scale_ = 1.0;
  Vector bandwidth_;
  double median_nn_ = 0.0;
  double final_loss_ = 0.0;
  // Stored training data, canonically sorted, as features z = (s t, x).
  Matrix z_;  // n x (d + 1)
  Matrix u_;  // n x m
  Network net_;
  std::vector<double> u_rows_;  // u_ in row-major order
  Vector u_min_, u_max_;
  KdTree tree_;         // over z_
  KdTree scaled_tree_;  // over z_ / bandwidth (kernel only)
};

struct CrossValidationResult {
  std::size_t best_index = 0;
  RegressionParams best;
  std::vector<double> losses;  // mean held-out MSE per grid entry
};

// K-fold cross-validation over trajectory ids (never splitting a
// trajectory). Ties resolve to the first grid entry.
CrossValidationResult CrossValidate(const RegressionDataset& data,
                                    const std::vector<RegressionParams>& grid,
                                    int folds, std::uint64_t seed);

}  // namespace ctrlflow

#endif  // CTRLFLOW_REGRESSION_HPP_
