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

#include "ctrlflow/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ctrlflow/experiment.hpp"
#include "ctrlflow/interpolants.hpp"
#include "ctrlflow/linalg.hpp"
#include "ctrlflow/measures.hpp"
#include "ctrlflow/noising.hpp"
#include "ctrlflow/regression.hpp"

namespace ctrlflow {

using nlohmann::json;

namespace {

Matrix DoubleIntegratorA() {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  return a;
}

Matrix DoubleIntegratorB() {
  Matrix b(2, 1);
  b << 0, 1;
  return b;
}

Vector UniformBox(RngStream& rng, int d, double lo, double hi) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = lo + (hi - lo) * rng.Uniform();
  return v;
}

// Times a check body and applies the runtime budget.
CheckResult Timed(const std::string& name, double budget,
                  const std::function<void(CheckResult&)>& body) {
  CheckResult r;
  r.name = name;
  r.time_budget = budget;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget > 0.0 && r.seconds > budget) {
    r.passed = false;
    r.detail += (r.detail.empty() ? "" : "; ") + std::string("over time budget");
  }
  return r;
}

std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

CheckResult GramianCheck() {
  return Timed("gramian_double_integrator", 1.0, [](CheckResult& r) {
    const auto g = ComputeGramian(DoubleIntegratorA(), DoubleIntegratorB(), 1.0);
    Matrix exact(2, 2);
    exact << 1.0 / 3.0, 0.5, 0.5, 1.0;
    r.measured = (g.W - exact).cwiseAbs().maxCoeff();
    r.tolerance = 1e-8;
    r.passed = r.measured <= r.tolerance;
  });
}

CheckResult MinEnergyCheck() {
  return Timed("min_energy_endpoint", 5.0, [](CheckResult& r) {
    const LinearSystem sys(DoubleIntegratorA(), DoubleIntegratorB());
    const MinEnergySteerer steer(sys, 1.0, 2000);
    RngStream rng(2024, "verify_min_energy");
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vector x0 = UniformBox(rng, 2, -1, 1), xT = UniformBox(rng, 2, -1, 1);
      worst = std::max(worst, steer.Steer(x0, xT).terminal_error);
    }
    const auto canon = steer.Steer(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0));
    double u_err = 0.0;
    for (std::size_t k = 0; k < canon.pair.size(); ++k) {
      const double t = canon.pair.times[k];
      u_err = std::max(u_err, std::abs(canon.pair.controls(k, 0) - (6.0 - 12.0 * t)));
    }
    r.measured = worst;
    r.tolerance = 1e-5;
    r.passed = worst <= 1e-5 && u_err <= 1e-8;
    r.detail = "u = 6 - 12t max error " + Num(u_err) + " (tol 1e-8)";
  });
}

CheckResult BrockettCheck() {
  return Timed("brockett_steering", 10.0, [](CheckResult& r) {
    RngStream rng(2025, "verify_brockett");
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vector x = UniformBox(rng, 3, -1, 1), y = UniformBox(rng, 3, -1, 1);
      worst = std::max(worst, BrockettSteerPair(x, y, 4000).terminal_error);
    }
    // The phase-2 second control equals c cos t, and cos(4 pi) = 1.
    const auto a = BrockettSteerPair(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0, 0, 1), 4000);
    const auto b = BrockettSteerPair(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 1, 0), 4000);
    const double ca = a.pair.controls(a.pair.controls.rows() - 1, 1);
    const double cb = b.pair.controls(b.pair.controls.rows() - 1, 1);
    const double c_err = std::max(std::abs(ca - 1.0 / std::numbers::pi),
                                  std::abs(cb + 1.0 / (2.0 * std::numbers::pi)));
    r.measured = worst;
    r.tolerance = 1e-6;
    r.passed = worst <= 1e-6 && c_err <= 1e-8;
    r.detail = "sinusoid amplitudes max error " + Num(c_err) + " (tol 1e-8)";
  });
}

CheckResult HamiltonianCheck() {
  return Timed("pmp_hamiltonian_conservation", 10.0, [](CheckResult& r) {
    const auto sys = BuiltinSystem("unicycle");
    const QuadraticCost cost{1.0};
    RngStream rng(2026, "verify_hamiltonian");
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Vector x0 = rng.NormalVector(3), p0 = rng.NormalVector(3);
      const auto ext = PmpExtremalPath(sys, cost, x0, p0, 1.0, 4000);
      worst = std::max(worst, ext.MaxHamiltonianDrift() / (1.0 + std::abs(ext.hamiltonian.front())));
    }
    r.measured = worst;
    r.tolerance = 1e-8;
    r.passed = worst <= 1e-8;
  });
}

CheckResult LtiOptimalityCheck() {
  return Timed("lti_pmp_optimality", 10.0, [](CheckResult& r) {
    const Matrix A = DoubleIntegratorA(), B = DoubleIntegratorB();
    const auto sys = LinearSystem(A, B).ToControlAffine();
    // Extremals run the reversed dynamics, so compare against the
    // minimum-energy cost of the reversed pair (-A, -B).
    const MinEnergySteerer reversed(LinearSystem(-A, -B), 1.0, 4001);
    const auto weights = SimpsonWeights(4001, 1.0);
    RngStream rng(2027, "verify_lti");
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Vector x0 = rng.NormalVector(2), p0 = rng.NormalVector(2);
      const auto ext = PmpExtremalPath(sys, QuadraticCost{1.0}, x0, p0, 1.0, 4001);
      double energy = 0.0;
      for (Eigen::Index k = 0; k < ext.pair.controls.rows(); ++k) {
        energy += weights[k] * ext.pair.controls.row(k).squaredNorm();
      }
      const double best = reversed.MinimumEnergy(x0, ext.pair.FinalState());
      worst = std::max(worst, std::abs(energy - best) / std::max(best, 1e-300));
    }
    r.measured = worst;
    r.tolerance = 1e-6;
    r.passed = worst <= 1e-6;
  });
}

CheckResult W2OracleCheck() {
  return Timed("exact_w2_bruteforce", 5.0, [](CheckResult& r) {
    RngStream rng(2028, "verify_w2");
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const int n = 2 + inst % 5;
      Matrix a(n, 3), b(n, 3);
      for (int i = 0; i < n; ++i) {
        a.row(i) = rng.NormalVector(3).transpose();
        b.row(i) = rng.NormalVector(3).transpose();
      }
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += (a.row(i) - b.row(perm[i])).squaredNorm();
        best = std::min(best, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
      const double brute = std::sqrt(best / n);
      const double fast = Wasserstein2(EmpiricalMeasure::Uniform(a), EmpiricalMeasure::Uniform(b));
      worst = std::max(worst, std::abs(brute - fast));
    }
    r.measured = worst;
    r.tolerance = 1e-12;
    r.passed = worst <= 1e-12;
  });
}

RegressionDataset RandomDataset(int trajectories, int per, int d, int m, std::uint64_t seed) {
  RngStream rng(seed, "verify_dataset");
  RegressionDataset data;
  data.x.resize(trajectories * per, d);
  data.u.resize(trajectories * per, m);
  for (int i = 0; i < trajectories; ++i) {
    for (int k = 0; k < per; ++k) {
      const int row = i * per + k;
      data.t.push_back(static_cast<double>(k) / (per - 1));
      data.traj_id.push_back(i);
      data.x.row(row) = rng.NormalVector(d).transpose();
      for (int c = 0; c < m; ++c) data.u(row, c) = std::sin(data.x(row, 0) + c) + 0.3 * rng.Normal();
    }
  }
  return data;
}

CheckResult RegressionInvariantsCheck() {
  return Timed("regression_invariants", 30.0, [](CheckResult& r) {
    int violations = 0;
    std::vector<std::string> failed;
    auto expect = [&](bool ok, const std::string& what) {
      if (!ok) {
        ++violations;
        failed.push_back(what);
      }
    };
    const auto data = RandomDataset(40, 10, 2, 2, 1);
    const Vector lo = data.u.colwise().minCoeff().transpose();
    const Vector hi = data.u.colwise().maxCoeff().transpose();
    const Vector mean = data.u.colwise().mean().transpose();
    const double const_loss = (data.u.rowwise() - mean.transpose()).rowwise().squaredNorm().mean();

    RegressionParams knn;
    knn.method = RegressionMethod::kKnn;
    RegressionParams kernel;
    kernel.method = RegressionMethod::kKernel;
    RegressionParams mlp;
    mlp.method = RegressionMethod::kMlp;
    mlp.hidden = {32, 32};
    mlp.steps = 1500;

    // Convex hull over 1000 random queries (inside and far outside).
    RngStream qrng(9, "verify_queries");
    for (const auto& params : {knn, kernel}) {
      const auto law = FeedbackLaw::Fit(data, params, 3);
      bool hull = true;
      for (int q = 0; q < 1000; ++q) {
        const Vector x = (q % 4 == 0 ? 20.0 : 1.5) * qrng.NormalVector(2);
        const Vector u = law(qrng.Uniform() * 1.2 - 0.1, x);
        hull = hull && (u.array() >= lo.array()).all() && (u.array() <= hi.array()).all();
      }
      expect(hull, ToString(params.method) + " convex hull");
    }
    // Loss dominance, all methods.
    for (const auto& params : {knn, kernel, mlp}) {
      const auto law = FeedbackLaw::Fit(data, params, 3);
      expect(law.Loss(data) <= const_loss, ToString(params.method) + " loss dominance");
    }
    // Determinism and permutation invariance.
    std::vector<std::size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[3], perm[100]);
    const auto shuffled = data.Subset(perm);
    for (const auto& params : {knn, kernel}) {
      const auto a = FeedbackLaw::Fit(data, params, 3);
      const auto b = FeedbackLaw::Fit(shuffled, params, 3);
      bool same = true;
      for (int q = 0; q < 200; ++q) {
        const Vector x = qrng.NormalVector(2);
        const double t = qrng.Uniform();
        same = same && (a(t, x).array() == b(t, x).array()).all();
      }
      expect(same, ToString(params.method) + " permutation invariance");
    }
    {
      const auto a = FeedbackLaw::Fit(data, mlp, 3);
      const auto b = FeedbackLaw::Fit(data, mlp, 3);
      const Vector x = Eigen::Vector2d(0.2, -0.4);
      expect((a(0.5, x).array() == b(0.5, x).array()).all(), "mlp determinism");
    }
    // Conditional-mean cases.
    RegressionDataset two;
    two.t = {0.5, 0.5};
    two.traj_id = {0, 1};
    two.x = Matrix::Constant(2, 1, 0.3);
    two.u.resize(2, 1);
    two.u << 1.0, -1.0;
    RegressionParams knn2 = knn;
    knn2.k = 2;
    expect(FeedbackLaw::Fit(two, knn2, 0)(0.5, Vector::Constant(1, 0.3))[0] == 0.0, "knn two-point mean");
    expect(std::abs(FeedbackLaw::Fit(two, kernel, 0)(0.5, Vector::Constant(1, 0.3))[0]) <= 1e-15,
           "kernel two-point mean");
    RegressionDataset constant = data;
    constant.u.setConstant(0.7);
    for (const auto& params : {knn, kernel, mlp}) {
      const auto law = FeedbackLaw::Fit(constant, params, 3);
      expect(law(0.3, Eigen::Vector2d(0.1, 0.9))[0] == 0.7, ToString(params.method) + " constant data");
    }
    r.measured = violations;
    r.tolerance = 0;
    r.passed = violations == 0;
    for (const auto& f : failed) r.detail += (r.detail.empty() ? "failed: " : ", ") + f;
  });
}

ExperimentReport RunBuiltin(const std::string& name, const std::string& scratch) {
  json doc = BuiltinExperimentConfig(name);
  doc["output_dir"] = (std::filesystem::absolute(scratch) / name).string();
  return RunExperiment(ExperimentConfig::FromJson(doc));
}

double Metric(const ExperimentReport& rep, const std::string& key) {
  const auto it = rep.metrics.find(key);
  if (it == rep.metrics.end()) throw Error("report lacks metric '" + key + "'");
  return it->second;
}

}  // namespace

json BuiltinExperimentConfig(const std::string& name) {
  if (name == "transport_linear") {
    return json::parse(R"({
      "schema_version": 1, "kind": "transport_linear", "system": "double_integrator",
      "mu0": {"type": "gaussian", "mean": [-2, -2], "std": 0.5},
      "muT": {"type": "gaussian", "mean": [2, 2], "std": 0.5},
      "coupling": "independent", "horizon": 1.0, "n_grid": 2000, "eval_n_grid": 200,
      "n_sample_times": 50, "n_train": 512, "n_eval": 200, "seed": 7,
      "regression": {"method": "kernel", "bandwidth_scale": 0.25}})");
  }
  if (name == "output_transport") {
    return json::parse(R"({
      "schema_version": 1, "kind": "output_transport", "system": "six_state_default",
      "mu0": {"type": "gaussian", "mean": [0, 0, 0, 0, 0, 0], "std": 0.5},
      "nuT": {"type": "gaussian", "mean": [1, 1], "std": 0.3},
      "output_indices": [0, 2], "poles": [-2, -2, -2, -2, -2, -2],
      "coupling": "independent", "horizon": 6.0, "n_grid": 2000, "eval_n_grid": 300,
      "n_sample_times": 150, "n_train": 256, "n_eval": 256, "eval_from_training": true,
      "seed": 11, "regression": {"method": "kernel", "bandwidth_scale": 0.1}})");
  }
  if (name == "unicycle_origin" || name == "unicycle_sphere") {
    json j = json::parse(R"({
      "schema_version": 1, "kind": "stabilize_pmp", "system": "unicycle",
      "mu0": {"type": "dirac", "point": [0, 0, 0]},
      "costate_scale": 5.0, "horizon": 2.0, "n_grid": 1000, "eval_n_grid": 200,
      "n_sample_times": 50, "n_train": 1500, "n_eval": 100, "seed": 3,
      "regression": {"method": "kernel", "bandwidth_scale": 0.05}, "success_radius": 0.2})");
    if (name == "unicycle_sphere") {
      j["mu0"] = {{"type", "uniform_sphere"}, {"center", {0, 0, 0}}, {"radius", 1.0}};
      j["seed"] = 4;
    }
    return j;
  }
  if (name == "martinet") {
    return json::parse(R"({
      "schema_version": 1, "kind": "stabilize_random", "system": "martinet",
      "mu0": {"type": "dirac", "point": [0, 0, 0]},
      "sigma": 3.0, "horizon": 2.0, "n_grid": 400, "eval_n_grid": 200,
      "n_sample_times": 50, "n_train": 2000, "n_eval": 100, "seed": 5,
      "regression": {"method": "kernel", "bandwidth_scale": 0.05}})");
  }
  throw ConfigError("no built-in experiment '" + name + "'");
}

const std::vector<std::string>& BuiltinExperimentNames() {
  static const std::vector<std::string> names = {"transport_linear", "output_transport", "unicycle_origin",
                                                 "unicycle_sphere", "martinet"};
  return names;
}

std::vector<Check> AcceptanceChecks(const std::string& scratch_dir) {
  // The six-state run feeds two checks; run it once.
  auto six_state = std::make_shared<std::optional<ExperimentReport>>();
  auto six_state_report = [six_state, scratch_dir]() -> const ExperimentReport& {
    if (!*six_state) *six_state = RunBuiltin("output_transport", scratch_dir);
    return **six_state;
  };
  std::vector<Check> checks = {
      {"gramian_double_integrator", "fast", GramianCheck},
      {"min_energy_endpoint", "fast", MinEnergyCheck},
      {"brockett_steering", "fast", BrockettCheck},
      {"pmp_hamiltonian_conservation", "fast", HamiltonianCheck},
      {"lti_pmp_optimality", "fast", LtiOptimalityCheck},
      {"exact_w2_bruteforce", "fast", W2OracleCheck},
      {"transport_marginal_consistency", "full",
       [scratch_dir] {
         return Timed("transport_marginal_consistency", 120.0, [&](CheckResult& r) {
           const auto rep = RunBuiltin("transport_linear", scratch_dir);
           const double term = Metric(rep, "terminal_w2_ratio");
           const double mid = Metric(rep, "intermediate_w2_mid_ratio");
           r.measured = term;
           r.tolerance = 0.15;
           r.passed = term <= 0.15 && mid <= 0.15;
           r.detail = "terminal W2 / transport scale; midpoint ratio " + Num(mid) + " (tol 0.15)";
         });
       }},
      {"approximate_flow_matching", "full",
       [six_state_report] {
         return Timed("approximate_flow_matching", 120.0, [&](CheckResult& r) {
           const auto& rep = six_state_report();
           const double pair_err = Metric(rep, "max_pair_terminal_error");
           r.measured = Metric(rep, "terminal_w2");
           r.tolerance = 0.05 + 0.02;
           r.passed = pair_err < 0.05 && r.measured <= r.tolerance;
           r.detail = "max pair terminal error " + Num(pair_err) + " (< 0.05)";
         });
       }},
      {"output_flow_matching", "full",
       [six_state_report] {
         return Timed("output_flow_matching", 120.0, [&](CheckResult& r) {
           r.measured = Metric(six_state_report(), "output_w2");
           r.tolerance = 0.07;
           r.passed = r.measured <= r.tolerance;
         });
       }},
      {"unicycle_stabilization", "full",
       [scratch_dir] {
         return Timed("unicycle_stabilization", 300.0, [&](CheckResult& r) {
           const auto origin = RunBuiltin("unicycle_origin", scratch_dir);
           const auto sphere = RunBuiltin("unicycle_sphere", scratch_dir);
           const double frac = Metric(origin, "fraction_within_radius");
           const double med = Metric(sphere, "median_terminal_distance");
           r.measured = frac;
           r.tolerance = 0.9;
           r.comparison = ">=";
           r.passed = frac >= 0.9 && med <= 0.15;
           r.detail = "origin: fraction within 0.2; sphere median distance " + Num(med) + " (tol 0.15)";
         });
       }},
      {"martinet_stabilization", "full",
       [scratch_dir] {
         return Timed("martinet_stabilization", 300.0, [&](CheckResult& r) {
           const auto rep = RunBuiltin("martinet", scratch_dir);
           r.measured = Metric(rep, "distance_ratio");
           r.tolerance = 0.2;
           r.passed = r.measured <= 0.2 && !rep.notes.empty();
           r.detail = "median terminal / median initial distance; non-convergence note " +
                      std::string(rep.notes.empty() ? "missing" : "present");
         });
       }},
      {"regression_invariants", "fast", RegressionInvariantsCheck},
  };
  return checks;
}

std::vector<CheckResult> RunVerification(const std::string& suite,
                                         const std::string& scratch_dir,
                                         std::ostream* table) {
  if (suite != "fast" && suite != "full") {
    throw ConfigError("unknown verification suite '" + suite + "' (fast|full)");
  }
  std::vector<CheckResult> results;
  for (const auto& check : AcceptanceChecks(scratch_dir)) {
    if (suite == "fast" && check.suite != "fast") continue;
    results.push_back(check.run());
    if (table) *table << FormatResult(results.back()) << std::endl;
  }
  if (table) {
    const auto passed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
    *table << passed << "/" << results.size() << " checks passed" << std::endl;
  }
  return results;
}

std::string FormatResult(const CheckResult& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(32) << r.name
     << " measured=" << Num(r.measured) << " " << (r.comparison == ">=" ? ">=" : "<=") << " "
     << Num(r.tolerance) << "  (" << std::fixed << std::setprecision(2) << r.seconds << "s";
  if (r.time_budget > 0.0) os << " of " << std::setprecision(0) << r.time_budget << "s";
  os << ")";
  if (!r.detail.empty()) os << "  " << r.detail;
  return os.str();
}

json ResultsJson(const std::string& suite, const std::vector<CheckResult>& results) {
  json checks = json::array();
  for (const auto& r : results) {
    checks.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"measured", r.measured},
                      {"tolerance", r.tolerance},
                      {"comparison", r.comparison},
                      {"seconds", r.seconds},
                      {"time_budget", r.time_budget},
                      {"detail", r.detail}});
  }
  const bool all = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
  return {{"suite", suite}, {"all_passed", all}, {"checks", checks}};
}

}  // namespace ctrlflow
