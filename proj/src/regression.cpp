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

#include "ctrlflow/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>

namespace ctrlflow {

using nlohmann::json;

void RegressionDataset::Validate() const {
  if (t.empty()) throw ConfigError("regression dataset is empty");
  const auto n = static_cast<Eigen::Index>(t.size());
  if (x.rows() != n || u.rows() != n || traj_id.size() != t.size()) {
    throw DimensionError("regression dataset: ragged columns");
  }
  if (!x.allFinite() || !u.allFinite() ||
      !std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) {
    throw ConfigError("regression dataset contains non-finite entries");
  }
}

RegressionDataset RegressionDataset::Subset(
    const std::vector<std::size_t>& rows) const {
  RegressionDataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.u.resize(static_cast<Eigen::Index>(rows.size()), u.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.t.push_back(t[rows[r]]);
    out.traj_id.push_back(traj_id[rows[r]]);
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
    out.u.row(static_cast<Eigen::Index>(r)) = u.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

void AppendTrajectory(RegressionDataset& data, const TrajectoryControlPair& pair,
                      std::int64_t id, const std::vector<double>& sample_times) {
  const auto d = pair.states.cols();
  const auto m = pair.controls.cols();
  if (data.t.empty()) {
    data.x.resize(0, d);
    data.u.resize(0, m);
  } else if (data.x.cols() != d || data.u.cols() != m) {
    throw DimensionError("append_trajectory: dimension mismatch");
  }
  const Eigen::Index base = data.x.rows();
  const auto add = static_cast<Eigen::Index>(sample_times.size());
  data.x.conservativeResize(base + add, d);
  data.u.conservativeResize(base + add, m);
  for (Eigen::Index k = 0; k < add; ++k) {
    const double t = sample_times[static_cast<std::size_t>(k)];
    data.t.push_back(t);
    data.traj_id.push_back(id);
    data.x.row(base + k) = pair.StateAt(t).transpose();
    data.u.row(base + k) = pair.ControlAt(t).transpose();
  }
}

RegressionDataset MakeDataset(const std::vector<TrajectoryControlPair>& pairs,
                              const std::vector<double>& sample_times) {
  RegressionDataset data;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    AppendTrajectory(data, pairs[i], static_cast<std::int64_t>(i), sample_times);
  }
  return data;
}

void WriteDatasetCsv(const RegressionDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "traj_id,t";
  for (int i = 0; i < data.state_dim(); ++i) out << ",x_" << i + 1;
  for (int i = 0; i < data.control_dim(); ++i) out << ",u_" << i + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    out << data.traj_id[r] << ',' << data.t[r];
    for (int i = 0; i < data.state_dim(); ++i) out << ',' << data.x(row, i);
    for (int i = 0; i < data.control_dim(); ++i) out << ',' << data.u(row, i);
    out << '\n';
  }
}

RegressionMethod ParseRegressionMethod(const std::string& name) {
  if (name == "knn") return RegressionMethod::kKnn;
  if (name == "kernel") return RegressionMethod::kKernel;
  if (name == "mlp") return RegressionMethod::kMlp;
  throw ConfigError("unknown regression method '" + name + "'");
}

std::string ToString(RegressionMethod method) {
  switch (method) {
    case RegressionMethod::kKnn: return "knn";
    case RegressionMethod::kKernel: return "kernel";
    case RegressionMethod::kMlp: return "mlp";
  }
  return "?";
}

void RegressionParams::Validate() const {
  if (k < 1) throw ConfigError("regression: k must be >= 1");
  if (!(bandwidth_scale > 0.0)) throw ConfigError("regression: bandwidth_scale must be > 0");
  for (double h : bandwidth) {
    if (!(h > 0.0)) throw ConfigError("regression: bandwidths must be > 0");
  }
  if (hidden.empty()) throw ConfigError("regression: mlp needs hidden layers");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("regression: layer sizes must be >= 1");
  }
  if (steps < 1 || batch_size < 1) throw ConfigError("regression: steps and batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("regression: learning_rate must be > 0");
  if (extrapolation_k < 1 || !(extrapolation_factor > 0.0)) {
    throw ConfigError("regression: invalid extrapolation settings");
  }
}

json RegressionParams::ToJson() const {
  return {{"method", ToString(method)},
          {"k", k},
          {"bandwidth", bandwidth},
          {"bandwidth_scale", bandwidth_scale},
          {"time_scale", time_scale},
          {"hidden", hidden},
          {"steps", steps},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"extrapolation_k", extrapolation_k},
          {"extrapolation_factor", extrapolation_factor}};
}

RegressionParams RegressionParams::FromJson(const json& j) {
  static const std::set<std::string> kKeys = {
      "method", "k", "bandwidth", "bandwidth_scale", "time_scale", "hidden",
      "steps", "batch_size", "learning_rate", "extrapolation_k",
      "extrapolation_factor"};
  if (!j.is_object()) throw ConfigError("regression params must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("regression: unknown key '" + key + "'");
  }
  RegressionParams p;
  try {
    if (j.contains("method")) p.method = ParseRegressionMethod(j.at("method").get<std::string>());
    if (j.contains("k")) p.k = j.at("k").get<int>();
    if (j.contains("bandwidth")) p.bandwidth = j.at("bandwidth").get<std::vector<double>>();
    if (j.contains("bandwidth_scale")) p.bandwidth_scale = j.at("bandwidth_scale").get<double>();
    if (j.contains("time_scale")) p.time_scale = j.at("time_scale").get<double>();
    if (j.contains("hidden")) p.hidden = j.at("hidden").get<std::vector<int>>();
    if (j.contains("steps")) p.steps = j.at("steps").get<int>();
    if (j.contains("batch_size")) p.batch_size = j.at("batch_size").get<int>();
    if (j.contains("learning_rate")) p.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("extrapolation_k")) p.extrapolation_k = j.at("extrapolation_k").get<int>();
    if (j.contains("extrapolation_factor")) {
      p.extrapolation_factor = j.at("extrapolation_factor").get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("regression params: ") + e.what());
  }
  p.Validate();
  return p;
}

namespace {

// Mean of rows computed relative to the first row, so identical rows
// reproduce their common value exactly.
Vector StableMean(const Matrix& rows) {
  const Vector ref = rows.row(0).transpose();
  return ref + (rows.rowwise() - ref.transpose()).colwise().mean().transpose();
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

Vector FeedbackLaw::Features(double t, const Vector& x) const {
  Vector z(d_ + 1);
  z[0] = time_scale_ * t;
  z.tail(d_) = x;
  return z;
}

FeedbackLaw FeedbackLaw::Fit(const RegressionDataset& data,
                             const RegressionParams& params,
                             std::uint64_t seed) {
  data.Validate();
  params.Validate();
  FeedbackLaw law;
  law.params_ = params;
  law.d_ = data.state_dim();
  law.m_ = data.control_dim();
  const auto n = static_cast<Eigen::Index>(data.size());

  // Canonical order: lexicographic in (t, x, u, id), so row permutations of the
  // input produce identical fitted laws.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (data.t[a] != data.t[b]) return data.t[a] < data.t[b];
    for (int i = 0; i < law.d_; ++i) {
      if (data.x(a, i) != data.x(b, i)) return data.x(a, i) < data.x(b, i);
    }
    for (int i = 0; i < law.m_; ++i) {
      if (data.u(a, i) != data.u(b, i)) return data.u(a, i) < data.u(b, i);
    }
    return data.traj_id[a] < data.traj_id[b];
  });

  if (params.time_scale > 0.0) {
    law.time_scale_ = params.time_scale;
  } else {
    const auto [tmin, tmax] = std::minmax_element(data.t.begin(), data.t.end());
    const double span = *tmax - *tmin;
    // Diameter of the state cloud, exact on up to 4000 evenly strided rows.
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / 4000);
    double diam2 = 0.0;
    for (Eigen::Index a = 0; a < n; a += stride) {
      for (Eigen::Index b = a + stride; b < n; b += stride) {
        diam2 = std::max(diam2, (data.x.row(a) - data.x.row(b)).squaredNorm());
      }
    }
    const double diam = std::sqrt(diam2);
    law.time_scale_ = (span > 0.0 && diam > 0.0) ? diam / span : 1.0;
  }

  law.z_.resize(n, law.d_ + 1);
  law.u_.resize(n, law.m_);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index src = order[static_cast<std::size_t>(r)];
    law.z_(r, 0) = law.time_scale_ * data.t[src];
    law.z_.row(r).tail(law.d_) = data.x.row(src);
    law.u_.row(r) = data.u.row(src);
  }

  const Eigen::Index features = law.d_ + 1;
  if (!params.bandwidth.empty()) {
    if (static_cast<Eigen::Index>(params.bandwidth.size()) != features) {
      throw ConfigError("regression: bandwidth needs d + 1 entries (time first)");
    }
    law.bandwidth_ = Eigen::Map<const Vector>(params.bandwidth.data(), features);
  } else {
    RngStream rng(seed, "bandwidth");
    std::vector<std::vector<double>> diffs(static_cast<std::size_t>(features));
    if (n > 1) {
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      const int pairs = static_cast<int>(std::min<Eigen::Index>(4000, n * (n - 1) / 2));
      for (int p = 0; p < pairs; ++p) {
        const Eigen::Index a = pick(rng.engine());
        Eigen::Index b = pick(rng.engine());
        if (a == b) b = (b + 1) % n;
        for (Eigen::Index j = 0; j < features; ++j) {
          diffs[j].push_back(std::abs(law.z_(a, j) - law.z_(b, j)));
        }
      }
    }
    law.bandwidth_.resize(features);
    double largest = 0.0;
    for (Eigen::Index j = 0; j < features; ++j) {
      law.bandwidth_[j] = Median(diffs[j]) / std::sqrt(2.0) * params.bandwidth_scale;
      largest = std::max(largest, law.bandwidth_[j]);
    }
    for (Eigen::Index j = 0; j < features; ++j) {
      if (!(law.bandwidth_[j] > 0.0)) law.bandwidth_[j] = largest > 0.0 ? largest : 1.0;
    }
  }

  law.Prepare();
  if (params.method != RegressionMethod::kMlp && n > 1) {
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) ids[r] = data.traj_id[order[r]];
    const bool mixed_ids = std::any_of(ids.begin(), ids.end(), [&](std::int64_t v) { return v != ids[0]; });
    RngStream rng(seed, "median_nn");
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    const int probes = static_cast<int>(std::min<Eigen::Index>(512, n));
    // Typical spacing of the sampled times, in feature units.
    std::vector<double> gaps;
    for (Eigen::Index r = 1; r < n; ++r) {
      if (law.z_(r, 0) > law.z_(r - 1, 0)) gaps.push_back(law.z_(r, 0) - law.z_(r - 1, 0));
    }
    const double time_gap = Median(gaps);
    std::vector<double> nn;
    for (int p = 0; p < probes; ++p) {
      const Eigen::Index a = probes == n ? p : pick(rng.engine());
      // Support scale: distance from a training row, moved to a random time
      // between neighbouring sample times, to the nearest row of another
      // trajectory. Rows of the same trajectory at the same sample time sit
      // much closer together and would make every off-grid query look like
      // an extrapolation.
      Vector za = law.z_.row(a).transpose();
      za[0] += time_gap * (rng.Uniform() - 0.5);
      const std::int64_t own = ids[static_cast<std::size_t>(a)];
      double found = -1.0;
      for (int k = 8; found < 0.0; k *= 4) {
        const auto hits = law.tree_.Nearest(za, k);
        for (const auto& [d2, row] : hits) {
          if (row != a && (!mixed_ids || ids[static_cast<std::size_t>(row)] != own)) {
            found = std::sqrt(d2);
            break;
          }
        }
        if (static_cast<Eigen::Index>(hits.size()) >= n) break;
      }
      if (found >= 0.0) nn.push_back(found);
    }
    law.median_nn_ = Median(nn);
    if (!(law.median_nn_ > 0.0)) {
      double sum = 0.0;
      int count = 0;
      for (double v : nn) {
        if (v > 0.0) {
          sum += v;
          ++count;
        }
      }
      law.median_nn_ = count ? sum / count : 0.0;
    }
  }

  if (params.method == RegressionMethod::kMlp) {
    law.TrainNetwork(seed);
    law.final_loss_ = law.Loss(data);
    if (!std::isfinite(law.final_loss_)) {
      throw TrainingDivergedError("mlp training produced a non-finite loss");
    }
  }
  return law;
}

void FeedbackLaw::Prepare() {
  if (params_.method == RegressionMethod::kMlp) return;
  u_rows_.resize(static_cast<std::size_t>(u_.size()));
  for (Eigen::Index r = 0; r < u_.rows(); ++r) {
    for (Eigen::Index c = 0; c < m_; ++c) u_rows_[static_cast<std::size_t>(r * m_ + c)] = u_(r, c);
  }
  u_min_ = u_.colwise().minCoeff().transpose();
  u_max_ = u_.colwise().maxCoeff().transpose();
  tree_ = KdTree(z_);
  if (params_.method == RegressionMethod::kKernel) {
    scaled_tree_ = KdTree(z_ * bandwidth_.cwiseInverse().asDiagonal());
  }
}

Vector FeedbackLaw::KnnMean(const Vector& z, int k, double* nearest) const {
  const auto hits = tree_.Nearest(z, k);
  if (nearest) *nearest = std::sqrt(hits.front().first);
  std::vector<Eigen::Index> rows;
  for (const auto& h : hits) rows.push_back(h.second);
  std::sort(rows.begin(), rows.end());
  Matrix picked(static_cast<Eigen::Index>(rows.size()), m_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    picked.row(static_cast<Eigen::Index>(i)) = u_.row(rows[i]);
  }
  return StableMean(picked);
}

Vector FeedbackLaw::KernelMean(const Vector& z, bool* degenerate) const {
  // Gaussian weights in bandwidth-scaled coordinates, relative to the
  // nearest point; contributions below exp(-kCutoff / 2) of the largest are
  // dropped.
  constexpr double kCutoff = 25.0;
  *degenerate = true;
  const Vector q = z.cwiseQuotient(bandwidth_);
  const auto nn = scaled_tree_.Nearest(q, 1);
  const double rmin = nn.front().first;
  if (!std::isfinite(rmin)) return Vector::Zero(m_);
  const Eigen::Index ref_row = nn.front().second;
  const double* ref = &u_rows_[static_cast<std::size_t>(ref_row * m_)];
  std::vector<double> acc(static_cast<std::size_t>(m_), 0.0);
  double wsum = 0.0;
  scaled_tree_.Radius(q, rmin + kCutoff, [&](Eigen::Index row, double r) {
    const double w = std::exp(-0.5 * (r - rmin));
    const double* ui = &u_rows_[static_cast<std::size_t>(row * m_)];
    for (int c = 0; c < m_; ++c) acc[c] += w * (ui[c] - ref[c]);
    wsum += w;
  });
  if (!(wsum > 0.0) || !std::isfinite(wsum)) return Vector::Zero(m_);
  *degenerate = false;
  Vector out(m_);
  // A convex combination of training controls; clamp away rounding.
  for (int c = 0; c < m_; ++c) {
    out[c] = std::clamp(ref[c] + acc[c] / wsum, u_min_[c], u_max_[c]);
  }
  return out;
}

Prediction FeedbackLaw::Predict(double t, const Vector& x) const {
  RequireDim(x, d_, "feedback law query");
  const Vector z = Features(t, x);
  if (params_.method == RegressionMethod::kMlp) {
    return {net_.Forward(z), false};
  }
  const double threshold = params_.extrapolation_factor * median_nn_;
  auto far = [&](double dist) { return median_nn_ > 0.0 && dist > threshold; };

  Prediction out;
  double nearest = 0.0;
  if (params_.method == RegressionMethod::kKnn) {
    out.u = KnnMean(z, params_.k, &nearest);
  } else {
    bool degenerate = false;
    out.u = KernelMean(z, &degenerate);
    Vector single = KnnMean(z, 1, &nearest);
    if (degenerate) out.u = std::move(single);
  }
  if (far(nearest)) {
    out.u = KnnMean(z, params_.extrapolation_k, nullptr);
    out.extrapolated = true;
  }
  return out;
}

double FeedbackLaw::Loss(const RegressionDataset& data) const {
  data.Validate();
  std::vector<double> sq(data.size());
  ParallelFor(data.size(), [&](std::size_t r) {
    const auto row = static_cast<Eigen::Index>(r);
    const Vector pred = Predict(data.t[r], data.x.row(row).transpose()).u;
    sq[r] = (pred - data.u.row(row).transpose()).squaredNorm();
  });
  return std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(data.size());
}

Vector FeedbackLaw::Network::Forward(const Vector& features) const {
  Vector a = (features - in_mean).cwiseQuotient(in_scale);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    a = weights[l] * a + biases[l];
    if (l + 1 < weights.size()) a = a.array().tanh();
  }
  return out_mean + out_scale.cwiseProduct(a);
}

void FeedbackLaw::TrainNetwork(std::uint64_t seed) {
  const Eigen::Index n = z_.rows();
  const Eigen::Index features = d_ + 1;
  auto& net = net_;
  net.in_mean = z_.colwise().mean().transpose();
  net.in_scale = ((z_.rowwise() - net.in_mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
  for (Eigen::Index j = 0; j < features; ++j) {
    if (!(net.in_scale[j] > 0.0)) net.in_scale[j] = 1.0;
  }
  net.out_mean = StableMean(u_);
  net.out_scale = ((u_.rowwise() - net.out_mean.transpose()).array().square().colwise().mean().sqrt()).transpose();
  // A constant output column keeps scale 0, so predictions return its value.
  Vector target_scale = net.out_scale;
  for (Eigen::Index j = 0; j < m_; ++j) {
    if (!(target_scale[j] > 0.0)) target_scale[j] = 1.0;
  }
  const Matrix inputs = ((z_.rowwise() - net.in_mean.transpose()).array().rowwise() /
                         net.in_scale.transpose().array()).matrix().transpose();  // f x n
  const Matrix targets = ((u_.rowwise() - net.out_mean.transpose()).array().rowwise() /
                          target_scale.transpose().array()).matrix().transpose();  // m x n

  std::vector<int> sizes{static_cast<int>(features)};
  sizes.insert(sizes.end(), params_.hidden.begin(), params_.hidden.end());
  sizes.push_back(m_);
  RngStream init(seed, "mlp_init");
  net.weights.clear();
  net.biases.clear();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    Matrix w(sizes[l + 1], sizes[l]);
    Vector b(sizes[l + 1]);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = bound * (2.0 * init.Uniform() - 1.0);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bound * (2.0 * init.Uniform() - 1.0);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    vel_w.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    vel_b.push_back(Vector::Zero(net.biases[l].size()));
  }

  RngStream order_rng(seed, "mlp_order");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const Eigen::Index batch = std::min<Eigen::Index>(params_.batch_size, n);
  const std::size_t layers = net.weights.size();
  constexpr double kMomentum = 0.9;

  for (int step = 0; step < params_.steps; ++step) {
    double lr = params_.learning_rate;
    if (step >= params_.steps / 2) lr *= 0.5;
    if (step >= 3 * params_.steps / 4) lr *= 0.5;

    Matrix xb(features, batch);
    Matrix yb(m_, batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        cursor = 0;
      }
      const Eigen::Index r = order[cursor++];
      xb.col(c) = inputs.col(r);
      yb.col(c) = targets.col(r);
    }
    std::vector<Matrix> acts{xb};
    for (std::size_t l = 0; l < layers; ++l) {
      Matrix pre = (net.weights[l] * acts.back()).colwise() + net.biases[l];
      if (l + 1 < layers) pre = pre.array().tanh();
      acts.push_back(std::move(pre));
    }
    Matrix delta = (acts.back() - yb) * (2.0 / static_cast<double>(batch * m_));
    const double loss = (acts.back() - yb).squaredNorm() / static_cast<double>(batch * m_);
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError("mlp training diverged at step " + std::to_string(step));
    }
    for (std::size_t l = layers; l-- > 0;) {
      const Matrix grad_w = delta * acts[l].transpose();
      const Vector grad_b = delta.rowwise().sum();
      if (l > 0) {
        delta = (net.weights[l].transpose() * delta).array() *
                (1.0 - acts[l].array().square());
      }
      vel_w[l] = kMomentum * vel_w[l] - lr * grad_w;
      vel_b[l] = kMomentum * vel_b[l] - lr * grad_b;
      net.weights[l] += vel_w[l];
      net.biases[l] += vel_b[l];
    }
  }
}

namespace {

json MatrixJson(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix JsonMatrix(const json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) {
      throw ConfigError("feedback law artifact: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

json VecJson(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector JsonVec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json FeedbackLaw::ToJson() const {
  json j = {{"format", "ctrlflow.feedback_law"},
            {"version", 1},
            {"method", ToString(params_.method)},
            {"params", params_.ToJson()},
            {"state_dim", d_},
            {"control_dim", m_},
            {"time_scale", time_scale_},
            {"bandwidth", VecJson(bandwidth_)},
            {"median_nn_distance", median_nn_},
            {"final_training_loss", final_loss_}};
  if (params_.method == RegressionMethod::kMlp) {
    json layers = json::array();
    for (std::size_t l = 0; l < net_.weights.size(); ++l) {
      layers.push_back({{"W", MatrixJson(net_.weights[l])}, {"b", VecJson(net_.biases[l])}});
    }
    j["network"] = {{"layers", layers},
                    {"in_mean", VecJson(net_.in_mean)},
                    {"in_scale", VecJson(net_.in_scale)},
                    {"out_mean", VecJson(net_.out_mean)},
                    {"out_scale", VecJson(net_.out_scale)}};
  } else {
    j["data"] = {{"features", MatrixJson(z_)}, {"controls", MatrixJson(u_)}};
  }
  return j;
}

FeedbackLaw FeedbackLaw::FromJson(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "ctrlflow.feedback_law") {
      throw ConfigError("not a feedback law artifact");
    }
    FeedbackLaw law;
    law.params_ = RegressionParams::FromJson(j.at("params"));
    law.d_ = j.at("state_dim").get<int>();
    law.m_ = j.at("control_dim").get<int>();
    law.time_scale_ = j.at("time_scale").get<double>();
    law.bandwidth_ = JsonVec(j.at("bandwidth"));
    law.median_nn_ = j.at("median_nn_distance").get<double>();
    law.final_loss_ = j.at("final_training_loss").get<double>();
    if (law.params_.method == RegressionMethod::kMlp) {
      const auto& net = j.at("network");
      for (const auto& layer : net.at("layers")) {
        const auto& w = layer.at("W");
        const Eigen::Index cols = w.empty() ? 0 : static_cast<Eigen::Index>(w[0].size());
        law.net_.weights.push_back(JsonMatrix(w, cols));
        law.net_.biases.push_back(JsonVec(layer.at("b")));
      }
      law.net_.in_mean = JsonVec(net.at("in_mean"));
      law.net_.in_scale = JsonVec(net.at("in_scale"));
      law.net_.out_mean = JsonVec(net.at("out_mean"));
      law.net_.out_scale = JsonVec(net.at("out_scale"));
    } else {
      law.z_ = JsonMatrix(j.at("data").at("features"), law.d_ + 1);
      law.u_ = JsonMatrix(j.at("data").at("controls"), law.m_);
      if (law.z_.rows() == 0 || law.z_.rows() != law.u_.rows()) {
        throw ConfigError("feedback law artifact: inconsistent data block");
      }
    }
    law.Prepare();
    return law;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("feedback law artifact: ") + e.what());
  }
}

CrossValidationResult CrossValidate(const RegressionDataset& data,
                                    const std::vector<RegressionParams>& grid,
                                    int folds, std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("crossval: hyperparameter grid is empty");
  if (folds < 2) throw ConfigError("crossval: need at least 2 folds");
  data.Validate();
  std::vector<std::int64_t> ids(data.traj_id.begin(), data.traj_id.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (static_cast<int>(ids.size()) < folds) {
    throw ConfigError("crossval: fewer trajectories than folds");
  }
  RngStream rng(seed, "crossval");
  std::shuffle(ids.begin(), ids.end(), rng.engine());
  std::map<std::int64_t, int> fold_of;
  for (std::size_t i = 0; i < ids.size(); ++i) fold_of[ids[i]] = static_cast<int>(i % folds);

  std::vector<std::vector<std::size_t>> train(folds), held(folds);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const int f = fold_of.at(data.traj_id[r]);
    for (int g = 0; g < folds; ++g) (g == f ? held[g] : train[g]).push_back(r);
  }

  CrossValidationResult result;
  for (const auto& params : grid) {
    double sse = 0.0;
    std::size_t count = 0;
    for (int f = 0; f < folds; ++f) {
      const auto law = FeedbackLaw::Fit(data.Subset(train[f]), params, seed);
      const auto test = data.Subset(held[f]);
      sse += law.Loss(test) * static_cast<double>(test.size());
      count += test.size();
    }
    result.losses.push_back(sse / static_cast<double>(count));
  }
  result.best_index = static_cast<std::size_t>(
      std::min_element(result.losses.begin(), result.losses.end()) - result.losses.begin());
  result.best = grid[result.best_index];
  return result;
}

}  // namespace ctrlflow
