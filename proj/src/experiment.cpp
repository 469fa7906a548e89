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

#include "ctrlflow/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "ctrlflow/flow.hpp"
#include "ctrlflow/interpolants.hpp"

namespace ctrlflow {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentKind ParseExperimentKind(const std::string& name) {
  if (name == "transport_linear") return ExperimentKind::kTransportLinear;
  if (name == "output_transport") return ExperimentKind::kOutputTransport;
  if (name == "brockett") return ExperimentKind::kBrockett;
  if (name == "stabilize_pmp") return ExperimentKind::kStabilizePmp;
  if (name == "stabilize_random") return ExperimentKind::kStabilizeRandom;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

std::string ToString(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTransportLinear: return "transport_linear";
    case ExperimentKind::kOutputTransport: return "output_transport";
    case ExperimentKind::kBrockett: return "brockett";
    case ExperimentKind::kStabilizePmp: return "stabilize_pmp";
    case ExperimentKind::kStabilizeRandom: return "stabilize_random";
  }
  return "?";
}

double TargetSet::Distance(const Vector& x) const {
  RequireDim(x, center.size(), "target set query");
  const double r = (x - center).norm();
  return kind == Kind::kPoint ? r : std::abs(r - radius);
}

TargetSet TargetSet::FromJson(const json& j) {
  if (!j.is_object()) throw ConfigError("target_set must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "type" && key != "center" && key != "radius") {
      throw ConfigError("target_set: unknown key '" + key + "'");
    }
  }
  TargetSet t;
  try {
    const auto type = j.at("type").get<std::string>();
    const auto c = j.at("center").get<std::vector<double>>();
    t.center = Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
    if (type == "point") {
      t.kind = Kind::kPoint;
    } else if (type == "sphere") {
      t.kind = Kind::kSphere;
      t.radius = j.at("radius").get<double>();
      if (!(t.radius > 0.0)) throw ConfigError("target_set: radius must be > 0");
    } else {
      throw ConfigError("target_set: type must be point or sphere");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("target_set: ") + e.what());
  }
  if (t.center.size() == 0) throw ConfigError("target_set: empty center");
  return t;
}

json TargetSet::ToJson() const {
  json j = {{"type", kind == Kind::kPoint ? "point" : "sphere"},
            {"center", std::vector<double>(center.data(), center.data() + center.size())}};
  if (kind == Kind::kSphere) j["radius"] = radius;
  return j;
}

namespace {

std::uint64_t SubSeed(std::uint64_t seed, std::string_view name) {
  return Mix64(seed ^ HashString(name));
}

std::string Hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

Matrix JsonMatrix(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    throw ConfigError(std::string(what) + " must be a nonempty array of rows");
  }
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != j[0].size()) {
      throw ConfigError(std::string(what) + " is ragged");
    }
    for (std::size_t c = 0; c < j[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

LinearSystem DoubleIntegrator() {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  Matrix b(2, 1);
  b << 0, 1;
  return {a, b};
}

bool IsLinearKind(ExperimentKind k) {
  return k == ExperimentKind::kTransportLinear || k == ExperimentKind::kOutputTransport;
}

bool IsStabilizeKind(ExperimentKind k) {
  return k == ExperimentKind::kStabilizePmp || k == ExperimentKind::kStabilizeRandom;
}

std::optional<LinearSystem> LinearFor(const ExperimentConfig& c) {
  if (c.system == "double_integrator") return DoubleIntegrator();
  if (c.system == "six_state_default") return SixStateDefault();
  if (c.system == "linear") return c.linear;
  return std::nullopt;
}

ControlAffineSystem PhysicalSystem(const ExperimentConfig& c) {
  if (auto lin = LinearFor(c)) return lin->ToControlAffine(c.system);
  return BuiltinSystem(c.system);
}

std::vector<std::complex<double>> ParsePoles(const json& j) {
  if (!j.is_array()) throw ConfigError("poles must be an array");
  std::vector<std::complex<double>> out;
  for (const auto& p : j) {
    if (p.is_number()) {
      out.emplace_back(p.get<double>(), 0.0);
    } else if (p.is_array() && p.size() == 2) {
      out.emplace_back(p[0].get<double>(), p[1].get<double>());
    } else {
      throw ConfigError("each pole is a number or a [re, im] pair");
    }
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  static const std::set<std::string> kKeys = {
      "schema_version", "kind", "system", "A", "B", "mu0", "muT", "nuT",
      "output_indices", "poles", "coupling", "horizon", "n_grid", "eval_n_grid",
      "n_sample_times", "n_train", "n_eval", "eval_from_training", "seed",
      "regression", "costate_scale", "sigma", "theta", "adjoint_sign",
      "eval_start", "target_set", "success_radius", "sensitivity_check",
      "output_dir"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  c.raw = j;
  try {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion) {
      throw ConfigError("schema_version must be " + std::to_string(kSchemaVersion));
    }
    c.kind = ParseExperimentKind(j.at("kind").get<std::string>());
    const bool linear_kind = IsLinearKind(c.kind);
    if (j.contains("system")) {
      c.system = j.at("system").get<std::string>();
    } else {
      switch (c.kind) {
        case ExperimentKind::kTransportLinear: c.system = "double_integrator"; break;
        case ExperimentKind::kOutputTransport: c.system = "six_state_default"; break;
        case ExperimentKind::kBrockett: c.system = "brockett"; break;
        default: c.system = "unicycle";
      }
    }
    if (j.contains("A") != j.contains("B")) throw ConfigError("A and B go together");
    if (c.system == "linear") {
      if (!j.contains("A")) throw ConfigError("system 'linear' needs A and B");
      c.linear = LinearSystem(JsonMatrix(j.at("A"), "A"), JsonMatrix(j.at("B"), "B"));
    } else if (j.contains("A")) {
      throw ConfigError("A and B are only valid with system 'linear'");
    }
    if (linear_kind && !LinearFor(c)) {
      throw ConfigError(ToString(c.kind) + " needs a linear system");
    }
    if (c.kind == ExperimentKind::kBrockett && c.system != "brockett") {
      throw ConfigError("brockett experiment runs on the brockett system");
    }
    const ControlAffineSystem sys = PhysicalSystem(c);  // throws on unknown names
    const int d = sys.state_dim();

    if (!j.contains("mu0")) throw ConfigError("mu0 is required");
    c.mu0 = MeasureSpec::FromJson(j.at("mu0"));
    if (c.mu0->Dim() != d) throw ConfigError("mu0 dimension does not match the system");

    const bool needs_muT = c.kind == ExperimentKind::kTransportLinear ||
                           c.kind == ExperimentKind::kBrockett;
    if (needs_muT) {
      if (!j.contains("muT")) throw ConfigError("muT is required for " + ToString(c.kind));
      if (j.at("muT").is_string()) {
        if (j.at("muT").get<std::string>() != "mu0") {
          throw ConfigError("muT must be a measure spec or the string \"mu0\"");
        }
        c.muT_same_samples = true;
        c.muT = c.mu0;
      } else {
        c.muT = MeasureSpec::FromJson(j.at("muT"));
        if (c.muT->Dim() != d) throw ConfigError("muT dimension does not match the system");
      }
    } else if (j.contains("muT")) {
      throw ConfigError("muT is not used by " + ToString(c.kind));
    }

    if (c.kind == ExperimentKind::kOutputTransport) {
      if (j.contains("output_indices")) c.output_indices = j.at("output_indices").get<std::vector<int>>();
      if (c.output_indices.empty()) throw ConfigError("output_indices must be nonempty");
      for (int i : c.output_indices) {
        if (i < 0 || i >= d) throw ConfigError("output index out of range");
      }
      if (!j.contains("nuT")) throw ConfigError("nuT is required for output_transport");
      c.nuT = MeasureSpec::FromJson(j.at("nuT"));
      if (c.nuT->Dim() != static_cast<int>(c.output_indices.size())) {
        throw ConfigError("nuT dimension must equal the number of output indices");
      }
      c.poles = j.contains("poles") ? ParsePoles(j.at("poles"))
                                    : std::vector<std::complex<double>>(d, {-2.0, 0.0});
    } else {
      for (const char* k : {"nuT", "output_indices", "poles"}) {
        if (j.contains(k)) throw ConfigError(std::string(k) + " is only used by output_transport");
      }
    }

    if (j.contains("coupling")) c.coupling = ParseCouplingKind(j.at("coupling").get<std::string>());
    switch (c.kind) {
      case ExperimentKind::kOutputTransport: c.horizon = 6.0; break;
      case ExperimentKind::kBrockett: c.horizon = 4.0 * std::numbers::pi; break;
      default: c.horizon = 1.0;
    }
    if (j.contains("horizon")) {
      if (c.kind == ExperimentKind::kBrockett) {
        throw ConfigError("the brockett construction has a fixed horizon of 4 pi");
      }
      c.horizon = j.at("horizon").get<double>();
    }
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw ConfigError("horizon must be positive");
    if (j.contains("n_grid")) c.n_grid = j.at("n_grid").get<int>();
    if (j.contains("eval_n_grid")) c.eval_n_grid = j.at("eval_n_grid").get<int>();
    if (j.contains("n_sample_times")) c.n_sample_times = j.at("n_sample_times").get<int>();
    if (c.n_grid < 4 || c.eval_n_grid < 2 || c.n_sample_times < 2) {
      throw ConfigError("need n_grid >= 4, eval_n_grid >= 2, n_sample_times >= 2");
    }
    if (j.contains("n_train")) c.n_train = j.at("n_train").get<int>();
    if (j.contains("n_eval")) c.n_eval = j.at("n_eval").get<int>();
    if (c.n_train < 1 || c.n_eval < 0) throw ConfigError("need n_train >= 1 and n_eval >= 0");
    if (j.contains("eval_from_training")) c.eval_from_training = j.at("eval_from_training").get<bool>();
    if (c.eval_from_training && (IsStabilizeKind(c.kind) || c.n_eval > c.n_train)) {
      throw ConfigError("eval_from_training needs a transport kind and n_eval <= n_train");
    }
    if (j.contains("seed")) {
      const auto& s = j.at("seed");
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0) throw ConfigError("seed must be a nonnegative integer");
      c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("regression")) c.regression = RegressionParams::FromJson(j.at("regression"));
    if (j.contains("costate_scale")) c.costate_scale = j.at("costate_scale").get<double>();
    if (j.contains("sigma")) c.sigma = j.at("sigma").get<double>();
    if (j.contains("theta")) c.cost.theta = j.at("theta").get<double>();
    if (j.contains("adjoint_sign")) c.adjoint_sign = ParseAdjointSign(j.at("adjoint_sign").get<std::string>());
    if (!(c.costate_scale >= 0.0) || !(c.sigma >= 0.0)) throw ConfigError("costate_scale and sigma must be >= 0");
    c.cost.Validate();

    if (IsStabilizeKind(c.kind)) {
      c.eval_start = j.contains("eval_start") ? MeasureSpec::FromJson(j.at("eval_start"))
                                              : MeasureSpec::FromJson({{"type", "gaussian"},
                                                                       {"mean", std::vector<double>(d, 0.0)},
                                                                       {"std", 1.0}});
      if (c.eval_start->Dim() != d) throw ConfigError("eval_start dimension does not match the system");
      if (j.contains("target_set")) {
        c.target_set = TargetSet::FromJson(j.at("target_set"));
      } else if (c.mu0->kind == MeasureSpec::Kind::kDirac) {
        c.target_set = TargetSet{TargetSet::Kind::kPoint, c.mu0->point, 0.0};
      } else if (c.mu0->kind == MeasureSpec::Kind::kUniformSphere) {
        c.target_set = TargetSet{TargetSet::Kind::kSphere, c.mu0->center, c.mu0->radius};
      } else {
        throw ConfigError("target_set is required when mu0 is neither dirac nor a sphere");
      }
      if (c.target_set->center.size() != d) throw ConfigError("target_set dimension mismatch");
    } else {
      for (const char* k : {"eval_start", "target_set", "costate_scale", "sigma", "theta", "adjoint_sign"}) {
        if (j.contains(k)) throw ConfigError(std::string(k) + " is only used by stabilization kinds");
      }
    }
    if (j.contains("success_radius")) c.success_radius = j.at("success_radius").get<double>();
    if (!(c.success_radius > 0.0)) throw ConfigError("success_radius must be > 0");
    if (j.contains("sensitivity_check")) c.sensitivity_check = j.at("sensitivity_check").get<bool>();
    c.output_dir = j.contains("output_dir") ? j.at("output_dir").get<std::string>()
                                            : "runs/" + ToString(c.kind);
    if (c.output_dir.empty()) throw ConfigError("output_dir must be nonempty");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::string ExperimentConfig::Hash() const { return Hex(HashString(raw.dump())); }

std::string ExperimentConfig::ResolvedOutputDir() const {
  const fs::path dir(output_dir);
  if (dir.is_absolute()) return dir.string();
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return (fs::path(root) / dir).string();
  }
  return dir.string();
}

const std::vector<std::string>& OverridableKeys() {
  static const std::vector<std::string> keys = {
      "kind", "system", "coupling", "horizon", "n_grid", "eval_n_grid",
      "n_sample_times", "n_train", "n_eval", "eval_from_training", "seed",
      "costate_scale", "sigma", "theta", "adjoint_sign", "success_radius",
      "sensitivity_check", "output_dir"};
  return keys;
}

void ApplyOverride(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto& keys = OverridableKeys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError("'" + key + "' cannot be overridden from the command line");
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded() || !value.is_primitive()) value = text;
  config[key] = value;
}

json ExperimentReport::ToJson() const {
  return {{"kind", kind},
          {"status", "ok"},
          {"metrics", metrics},
          {"notes", notes},
          {"config_hash", config_hash},
          {"wall_clock_seconds", wall_clock_seconds},
          {"manifest", manifest},
          {"series", series}};
}

namespace {

// Keeps track of what has been written to the run directory.
class RunWriter {
 public:
  RunWriter(fs::path root, std::string hash, std::string kind)
      : root_(std::move(root)), hash_(std::move(hash)), kind_(std::move(kind)) {}

  std::string Path(const std::string& rel) const {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    return p.string();
  }
  void Record(const std::string& rel) { manifest_.push_back(rel); }
  const std::vector<std::string>& manifest() const { return manifest_; }
  const fs::path& root() const { return root_; }

  void Json(const std::string& rel, const json& doc) {
    std::ofstream out(Path(rel));
    if (!out) throw Error("cannot write " + rel);
    out << doc.dump(2) << '\n';
    Record(rel);
  }
  // Sidecar next to a data file: <stem>.meta.json.
  void Sidecar(const std::string& rel, json extra = json::object()) {
    extra["config_hash"] = hash_;
    extra["kind"] = kind_;
    extra["file"] = fs::path(rel).filename().string();
    const std::string side = (fs::path(rel).parent_path() / fs::path(rel).stem()).string() + ".meta.json";
    Json(side, extra);
  }
  void Measure(const std::string& rel, const EmpiricalMeasure& m) {
    const std::string side = (fs::path(rel).parent_path() / fs::path(rel).stem()).string() + ".meta.json";
    WriteMeasure(m, Path(rel), Path(side));
    std::ifstream in(Path(side));
    json doc = json::parse(in);
    in.close();
    doc["config_hash"] = hash_;
    doc["kind"] = kind_;
    std::ofstream(Path(side)) << doc.dump(2) << '\n';
    Record(rel);
    Record(side);
  }

 private:
  fs::path root_;
  std::string hash_;
  std::string kind_;
  std::vector<std::string> manifest_;
};

template <class F>
auto InStage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

// At most `cap` rows of the pair, evenly strided, always keeping the ends.
std::vector<std::size_t> Thin(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> rows;
  if (n <= cap) {
    for (std::size_t k = 0; k < n; ++k) rows.push_back(k);
    return rows;
  }
  for (std::size_t i = 0; i < cap; ++i) rows.push_back(i * (n - 1) / (cap - 1));
  return rows;
}

void WriteBundle(const std::vector<TrajectoryControlPair>& pairs,
                 const std::vector<std::size_t>& ids, const std::string& path,
                 int d, int m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "traj_id,t";
  for (int i = 0; i < d; ++i) out << ",x_" << i + 1;
  for (int i = 0; i < m; ++i) out << ",u_" << i + 1;
  out << '\n' << std::setprecision(17);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t k : Thin(pairs[p].size(), 201)) {
      out << ids[p] << ',' << pairs[p].times[k];
      for (int i = 0; i < d; ++i) out << ',' << pairs[p].states(k, i);
      for (int i = 0; i < m; ++i) out << ',' << pairs[p].controls(k, i);
      out << '\n';
    }
  }
}

TrajectoryControlPair ThinPair(const TrajectoryControlPair& pair, std::size_t cap) {
  const auto rows = Thin(pair.size(), cap);
  TrajectoryControlPair out;
  out.states.resize(static_cast<Eigen::Index>(rows.size()), pair.states.cols());
  out.controls.resize(static_cast<Eigen::Index>(rows.size()), pair.controls.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.times.push_back(pair.times[rows[i]]);
    out.states.row(static_cast<Eigen::Index>(i)) = pair.states.row(static_cast<Eigen::Index>(rows[i]));
    out.controls.row(static_cast<Eigen::Index>(i)) = pair.controls.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

double Quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Matrix StackRows(const std::vector<Vector>& rows, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

Matrix FinalStates(const std::vector<TrajectoryControlPair>& pairs, Eigen::Index d) {
  Matrix m(static_cast<Eigen::Index>(pairs.size()), d);
  for (std::size_t i = 0; i < pairs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pairs[i].FinalState().transpose();
  return m;
}

Matrix SelectColumns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

// Pairs plus the target each one was built to reach.
struct TrainingPairs {
  std::vector<TrajectoryControlPair> pairs;
  Matrix starts;
  Matrix targets;
  std::vector<double> terminal_errors;
};

TrainingPairs BuildTransportPairs(const ExperimentConfig& c, const Coupling& coupling,
                                  const Matrix& K, const std::vector<Vector>& feedforward) {
  const auto n = static_cast<std::size_t>(coupling.size());
  TrainingPairs out;
  out.pairs.resize(n);
  out.terminal_errors.resize(n);
  out.starts = coupling.first;
  out.targets = coupling.second;
  std::optional<MinEnergySteerer> steerer;
  std::optional<LinearSystem> lin = LinearFor(c);
  if (c.kind == ExperimentKind::kTransportLinear) steerer.emplace(*lin, c.horizon, c.n_grid);
  ParallelFor(n, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector x0 = coupling.first.row(row).transpose();
    const Vector xT = coupling.second.row(row).transpose();
    SteeringPair sp;
    switch (c.kind) {
      case ExperimentKind::kTransportLinear: sp = steerer->Steer(x0, xT); break;
      case ExperimentKind::kOutputTransport:
        sp = FeedbackSteerPair(lin->A, lin->B, K, xT, feedforward[i], x0, c.horizon, c.n_grid);
        break;
      default: sp = BrockettSteerPair(x0, xT, c.n_grid);
    }
    out.pairs[i] = std::move(sp.pair);
    out.terminal_errors[i] = sp.terminal_error;
  });
  return out;
}

}  // namespace

ExperimentReport RunExperiment(const ExperimentConfig& c) {
  const auto clock_start = std::chrono::steady_clock::now();
  const ControlAffineSystem sys = PhysicalSystem(c);
  const int d = sys.state_dim();
  const int m = sys.control_dim();
  const std::string hash = c.Hash();
  RunWriter out(c.ResolvedOutputDir(), hash, ToString(c.kind));

  ExperimentReport report;
  report.kind = ToString(c.kind);
  report.config_hash = hash;
  report.output_dir = out.root().string();
  auto& metrics = report.metrics;

  try {
    InStage("write", [&] {
      fs::create_directories(out.root());
      json cfg = c.raw;
      out.Json("config.json", {{"config", cfg}, {"config_hash", hash}});
    });

    const auto sample_times = UniformGrid(0.0, c.horizon, c.n_sample_times);
    RegressionDataset dataset;
    std::vector<TrajectoryControlPair> train_pairs;
    TrainingPairs transport;
    Matrix K;
    EmpiricalMeasure mu0_train, muT_train;
    std::vector<Vector> feedforward;

    if (!IsStabilizeKind(c.kind)) {
      // Stage 1: sample the end-point measures and couple them.
      Coupling coupling = InStage("sample", [&] {
        mu0_train = SampleMeasure(*c.mu0, c.n_train, SubSeed(c.seed, "mu0"));
        if (c.kind == ExperimentKind::kOutputTransport) {
          const auto nu = SampleMeasure(*c.nuT, c.n_train, SubSeed(c.seed, "nuT"));
          Matrix lifted = Matrix::Zero(c.n_train, d);
          for (std::size_t k = 0; k < c.output_indices.size(); ++k) {
            lifted.col(c.output_indices[k]) = nu.points.col(static_cast<Eigen::Index>(k));
          }
          muT_train = EmpiricalMeasure::Uniform(std::move(lifted), nu.seed, "lifted nuT");
        } else if (c.muT_same_samples) {
          muT_train = mu0_train;
        } else {
          muT_train = SampleMeasure(*c.muT, c.n_train, SubSeed(c.seed, "muT"));
        }
        return BuildCoupling(mu0_train, muT_train, c.coupling, SubSeed(c.seed, "coupling"));
      });

      // Stage 2: interpolate each coupled pair.
      transport = InStage("interpolate", [&] {
        if (c.kind == ExperimentKind::kOutputTransport) {
          const LinearSystem lin = *LinearFor(c);
          K = PlacePoles(lin.A, lin.B, c.poles, SubSeed(c.seed, "poles"));
          for (Eigen::Index i = 0; i < coupling.size(); ++i) {
            feedforward.push_back(EquilibriumFeedforward(lin.A, lin.B, coupling.second.row(i).transpose()));
          }
        }
        return BuildTransportPairs(c, coupling, K, feedforward);
      });
      train_pairs = transport.pairs;
      metrics["max_pair_terminal_error"] =
          *std::max_element(transport.terminal_errors.begin(), transport.terminal_errors.end());
      metrics["transport_scale"] = MeanCrossDistance(mu0_train, muT_train);

      InStage("write", [&] {
        json index = json::array();
        for (std::size_t i = 0; i < train_pairs.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "pairs/pair_%05zu.csv", i);
          WritePairCsv(ThinPair(train_pairs[i], 401), out.Path(name));
          out.Record(name);
          index.push_back({{"file", name}, {"terminal_error", transport.terminal_errors[i]}});
        }
        out.Json("pairs/index.json", {{"config_hash", hash},
                                      {"seed", c.seed},
                                      {"coupling", ToString(c.coupling)},
                                      {"pairs", index}});
      });
      dataset = MakeDataset(train_pairs, sample_times);
    } else {
      // Stabilization: noising from the target set under the reversed dynamics.
      NoisingConfig nc;
      nc.mode = c.kind == ExperimentKind::kStabilizePmp ? NoisingConfig::Mode::kPmp
                                                         : NoisingConfig::Mode::kRandomized;
      nc.start = *c.mu0;
      nc.costate_scale = c.costate_scale;
      nc.cost = c.cost;
      nc.adjoint_sign = c.adjoint_sign;
      nc.sigma = c.sigma;
      nc.n_samples = c.n_train;
      nc.horizon = c.horizon;
      nc.n_grid = c.n_grid;
      nc.n_sample_times = c.n_sample_times;
      nc.seed = SubSeed(c.seed, "noising");
      NoisingResult noise = InStage("noise", [&] { return GenerateNoisingDataset(sys, nc); });
      if (noise.trajectories.empty()) throw StageError("noise", "every noising trajectory blew up");
      metrics["excluded_trajectories"] = static_cast<double>(noise.excluded);
      if (nc.mode == NoisingConfig::Mode::kPmp) metrics["max_hamiltonian_drift"] = noise.max_hamiltonian_drift;
      dataset = std::move(noise.dataset);
      train_pairs = std::move(noise.trajectories);
      InStage("write", [&] {
        WriteBundle(train_pairs, noise.kept_index, out.Path("trajectories.csv"), d, m);
        out.Record("trajectories.csv");
        json meta = noise.Metadata();
        meta["mode"] = nc.mode == NoisingConfig::Mode::kPmp ? "pmp" : "randomized";
        meta["seed"] = nc.seed;
        out.Sidecar("trajectories.csv", meta);
      });
    }

    InStage("write", [&] {
      WriteDatasetCsv(dataset, out.Path("dataset.csv"));
      out.Record("dataset.csv");
      out.Sidecar("dataset.csv", {{"rows", dataset.size()}, {"seed", c.seed}});
    });

    // Stage 3: regression.
    const FeedbackLaw law = InStage("fit", [&] {
      return FeedbackLaw::Fit(dataset, c.regression, SubSeed(c.seed, "regression"));
    });
    InStage("fit", [&] {
      std::vector<std::size_t> rows;
      const std::size_t stride = std::max<std::size_t>(1, dataset.size() / 2000);
      for (std::size_t r = 0; r < dataset.size(); r += stride) rows.push_back(r);
      const auto probe = dataset.Subset(rows);
      metrics["training_loss"] = law.Loss(probe);
      const Vector mean = dataset.u.colwise().mean().transpose();
      metrics["constant_predictor_loss"] =
          (probe.u.rowwise() - mean.transpose()).rowwise().squaredNorm().mean();
    });
    InStage("write", [&] {
      json doc = law.ToJson();
      doc["config_hash"] = hash;
      out.Json("law.json", doc);
    });

    // Stage 4: integrate the learned closed loop.
    RolloutBatch rollouts;
    Matrix eval_starts, eval_targets;
    std::vector<double> initial_dist;
    // Evaluation draws; an empty evaluation set is allowed.
    auto draw = [&](const MeasureSpec& spec, const char* stream) {
      if (c.n_eval == 0) return Matrix(0, spec.Dim());
      return SampleMeasure(spec, c.n_eval, SubSeed(c.seed, stream)).points;
    };
    if (!IsStabilizeKind(c.kind)) {
      InStage("sample", [&] {
        if (c.eval_from_training) {
          eval_starts = transport.starts.topRows(c.n_eval);
          eval_targets = transport.targets.topRows(c.n_eval);
        } else {
          eval_starts = draw(*c.mu0, "eval_mu0");
          if (c.kind == ExperimentKind::kOutputTransport) {
            const Matrix outputs = draw(*c.nuT, "eval_nuT");
            eval_targets = Matrix::Zero(c.n_eval, d);
            for (std::size_t k = 0; k < c.output_indices.size(); ++k) {
              eval_targets.col(c.output_indices[k]) = outputs.col(static_cast<Eigen::Index>(k));
            }
          } else if (c.muT_same_samples) {
            eval_targets = eval_starts;
          } else {
            eval_targets = draw(*c.muT, "eval_muT");
          }
        }
      });
      rollouts = InStage("integrate", [&] {
        std::vector<Vector> starts;
        for (Eigen::Index i = 0; i < eval_starts.rows(); ++i) starts.push_back(eval_starts.row(i).transpose());
        return RolloutFrom(sys, law, starts, c.horizon, c.eval_n_grid, Direction::kForward);
      });
    } else {
      const MeasureSpec start_spec = *c.eval_start;
      rollouts = InStage("integrate", [&] {
        return ResampleAndReverse(sys, law, [&](RngStream& rng) { return start_spec.Draw(rng); },
                                  c.n_eval, c.horizon, c.eval_n_grid, SubSeed(c.seed, "eval"));
      });
      eval_starts = StackRows(rollouts.starts, d);
      eval_targets = draw(*c.mu0, "eval_target");
    }
    metrics["excluded_eval"] = static_cast<double>(rollouts.excluded);
    metrics["extrapolated_steps"] = static_cast<double>(rollouts.extrapolated_steps);
    const Matrix achieved = FinalStates(rollouts.pairs, d);

    // Stage 5: evaluate.
    InStage("evaluate", [&] {
      const double T = c.horizon;
      std::vector<double> series_t;
      for (int k = 0; k <= 20; ++k) series_t.push_back(T * k / 20.0);
      report.series["t"] = series_t;

      if (!IsStabilizeKind(c.kind)) {
        if (!rollouts.pairs.empty() && eval_targets.rows() > 0) {
          const auto ach = EmpiricalMeasure::Uniform(achieved);
          const auto tgt = EmpiricalMeasure::Uniform(eval_targets);
          const auto w2 = Wasserstein2Auto(ach, tgt, SubSeed(c.seed, "w2"));
          metrics["terminal_w2"] = w2.value;
          metrics["terminal_w2_sliced"] = w2.sliced ? 1.0 : 0.0;
          metrics["terminal_w2_ratio"] = w2.value / metrics["transport_scale"];
          if (c.kind == ExperimentKind::kOutputTransport) {
            const auto out_ach = EmpiricalMeasure::Uniform(SelectColumns(achieved, c.output_indices));
            const auto out_tgt = EmpiricalMeasure::Uniform(SelectColumns(eval_targets, c.output_indices));
            metrics["output_w2"] = Wasserstein2Auto(out_ach, out_tgt, SubSeed(c.seed, "w2")).value;
          }
          std::vector<double> w2_series;
          for (double t : series_t) {
            Matrix at(static_cast<Eigen::Index>(rollouts.pairs.size()), d);
            for (std::size_t i = 0; i < rollouts.pairs.size(); ++i) at.row(static_cast<Eigen::Index>(i)) = rollouts.pairs[i].StateAt(t).transpose();
            w2_series.push_back(Wasserstein2Auto(EmpiricalMeasure::Uniform(at), tgt, SubSeed(c.seed, "w2")).value);
          }
          report.series["w2_to_target"] = w2_series;
        }
        // Learned flow from the training starts against the constructed
        // marginals at interior times.
        const std::size_t n_cmp = std::min<std::size_t>(256, train_pairs.size());
        std::vector<Vector> starts;
        for (std::size_t i = 0; i < n_cmp; ++i) starts.push_back(train_pairs[i].InitialState());
        const auto learned = RolloutFrom(sys, law, starts, T, c.eval_n_grid, Direction::kForward);
        if (learned.pairs.size() == n_cmp) {
          const std::vector<TrajectoryControlPair> built(train_pairs.begin(), train_pairs.begin() + static_cast<std::ptrdiff_t>(n_cmp));
          const std::vector<double> probe_t = {T / 4, T / 2, 3 * T / 4};
          const auto lm = MarginalSnapshots(learned.pairs, probe_t);
          const auto bm = MarginalSnapshots(built, probe_t);
          const char* names[] = {"intermediate_w2_q1", "intermediate_w2_mid", "intermediate_w2_q3"};
          for (std::size_t k = 0; k < probe_t.size(); ++k) metrics[names[k]] = Wasserstein2(lm[k], bm[k]);
          metrics["intermediate_w2_mid_ratio"] = metrics["intermediate_w2_mid"] / metrics["transport_scale"];
        } else {
          metrics["excluded_intermediate"] = static_cast<double>(n_cmp - learned.pairs.size());
        }
      } else {
        const TargetSet& target = *c.target_set;
        std::vector<double> term, init;
        for (std::size_t i = 0; i < rollouts.pairs.size(); ++i) {
          term.push_back(target.Distance(rollouts.pairs[i].FinalState()));
          init.push_back(target.Distance(rollouts.pairs[i].InitialState()));
        }
        if (!term.empty()) {
          std::size_t hits = 0;
          for (double v : term) hits += v <= c.success_radius ? 1 : 0;
          metrics["median_terminal_distance"] = Quantile(term, 0.5);
          metrics["p90_terminal_distance"] = Quantile(term, 0.9);
          metrics["median_initial_distance"] = Quantile(init, 0.5);
          metrics["distance_ratio"] = metrics["median_terminal_distance"] / metrics["median_initial_distance"];
          metrics["fraction_within_radius"] = static_cast<double>(hits) / static_cast<double>(c.n_eval);
          std::vector<double> med, p90;
          for (double t : series_t) {
            std::vector<double> dist;
            for (const auto& p : rollouts.pairs) dist.push_back(target.Distance(p.StateAt(t)));
            med.push_back(Quantile(dist, 0.5));
            p90.push_back(Quantile(dist, 0.9));
          }
          report.series["median_distance"] = med;
          report.series["p90_distance"] = p90;
        }
        if (c.kind == ExperimentKind::kStabilizeRandom) {
          report.notes.push_back(
              "randomized-control reversal concentrates mass near the target set; "
              "trajectories are not expected to converge exactly to a point");
        }
      }
      if (c.sensitivity_check && eval_starts.rows() > 0) {
        try {
          const Vector z0 = eval_starts.row(0).transpose();
          const auto rep = IsStabilizeKind(c.kind)
                               ? CheckSensitivity(sys.TimeReversed(), law, z0, T, c.eval_n_grid, Direction::kReversed)
                               : CheckSensitivity(sys, law, z0, T, c.eval_n_grid, Direction::kForward);
          metrics["sensitivity_growth"] = rep.growth;
          metrics["sensitivity_bound"] = std::min(rep.bound, 1e300);
          metrics["sensitivity_warning"] = rep.warning ? 1.0 : 0.0;
          if (rep.warning) {
            report.notes.push_back("sensitivity probe: nearby starts separated faster than the "
                                   "local slope bound; the closed-loop flow may not be unique here");
          }
        } catch (const BlowUpError&) {
          report.notes.push_back("sensitivity probe blew up; skipped");
        }
      }
    });

    InStage("write", [&] {
      const std::vector<double> snap_t = {0.0, c.horizon / 4, c.horizon / 2, 3 * c.horizon / 4, c.horizon};
      const auto snaps = MarginalSnapshots(rollouts.pairs, snap_t);
      for (std::size_t k = 0; k < snaps.size(); ++k) {
        const std::string rel = "snapshots/snapshot_" + std::to_string(k) + ".csv";
        WriteSnapshotCsv(snaps[k], out.Path(rel));
        out.Record(rel);
        out.Sidecar(rel, {{"time", snap_t[k]}, {"n", snaps[k].size()}});
      }
      out.Measure("eval_initial.csv", EmpiricalMeasure::Uniform(eval_starts, c.seed, "evaluation starts"));
      out.Measure("eval_target.csv", EmpiricalMeasure::Uniform(eval_targets, c.seed, "evaluation targets"));
      out.Measure("eval_final.csv", EmpiricalMeasure::Uniform(achieved, c.seed, "learned-flow endpoints"));
      WriteBundle(rollouts.pairs, rollouts.kept_index, out.Path("rollouts.csv"), d, m);
      out.Record("rollouts.csv");
      out.Sidecar("rollouts.csv", {{"direction", IsStabilizeKind(c.kind) ? "reversed" : "forward"}});
    });

    for (const auto& [name, value] : metrics) {
      if (!std::isfinite(value)) throw StageError("evaluate", "metric '" + name + "' is not finite");
    }
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    report.manifest = out.manifest();
    report.manifest.push_back("report.json");
    InStage("write", [&] {
      std::ofstream f(out.Path("report.json"));
      f << report.ToJson().dump(2) << '\n';
    });
    return report;
  } catch (const StageError& e) {
    // Leave a report that flags the partial outputs, then propagate.
    try {
      json doc = report.ToJson();
      doc["status"] = "failed";
      doc["failed_stage"] = e.stage();
      doc["error"] = e.what();
      doc["partial"] = true;
      doc["manifest"] = out.manifest();
      if (fs::exists(out.root())) std::ofstream(out.Path("report.json")) << doc.dump(2) << '\n';
    } catch (...) {
    }
    throw;
  }
}

namespace {

std::vector<std::vector<double>> ReadCsvRows(const fs::path& path, std::string* header) {
  std::ifstream in(path);
  if (!in) throw Error("missing run file " + path.string());
  std::string line;
  std::getline(in, *header);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string SpaceHeader(const std::string& csv_header) {
  std::string h = csv_header;
  std::replace(h.begin(), h.end(), ',', ' ');
  return "# " + h;
}

}  // namespace

std::vector<std::string> EmitPlotData(const std::string& run_dir) {
  const fs::path root(run_dir);
  const fs::path report_path = root / "report.json";
  if (!fs::exists(report_path)) throw ConfigError("no report.json (manifest) in " + run_dir);
  std::ifstream rin(report_path);
  const json report = json::parse(rin, nullptr, false);
  if (report.is_discarded() || !report.contains("manifest")) {
    throw ConfigError("report.json in " + run_dir + " has no manifest");
  }
  if (report.value("status", "ok") != "ok") throw Error("run in " + run_dir + " did not complete");
  fs::create_directories(root / "plot");
  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    written.push_back((root / "plot" / name).string());
    std::ofstream f(written.back());
    if (!f) throw Error("cannot write " + written.back());
    f << std::setprecision(10);
    return f;
  };

  for (const char* which : {"initial", "target", "final"}) {
    std::string header;
    const auto rows = ReadCsvRows(root / (std::string("eval_") + which + ".csv"), &header);
    auto f = open(std::string("scatter_") + (std::string(which) == "final" ? "achieved" : which) + ".dat");
    f << SpaceHeader(header) << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) f << (i ? " " : "") << r[i];
      f << '\n';
    }
  }

  {
    std::string header;
    const auto rows = ReadCsvRows(root / "rollouts.csv", &header);
    auto f = open("trajectories.dat");
    f << SpaceHeader(header) << '\n';
    double current = -1.0;
    for (const auto& r : rows) {
      if (current >= 0.0 && r[0] != current) f << "\n\n";
      current = r[0];
      for (std::size_t i = 0; i < r.size(); ++i) f << (i ? " " : "") << r[i];
      f << '\n';
    }
  }

  {
    auto f = open("distance.dat");
    const json& series = report.at("series");
    std::vector<std::string> cols;
    if (series.is_object()) {
      for (const auto& [key, value] : series.items()) {
        if (key != "t") cols.push_back(key);
      }
    }
    f << "# t";
    for (const auto& col : cols) f << ' ' << col;
    f << '\n';
    if (series.is_object() && series.contains("t")) {
      for (std::size_t k = 0; k < series.at("t").size(); ++k) {
        f << series.at("t")[k].get<double>();
        for (const auto& col : cols) f << ' ' << series.at(col)[k].get<double>();
        f << '\n';
      }
    }
  }
  return written;
}

}  // namespace ctrlflow
