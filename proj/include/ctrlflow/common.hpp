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

#ifndef CTRLFLOW_COMMON_HPP_
#define CTRLFLOW_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ctrlflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: wrong dimensions, invalid parameters, bad config.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class LookupError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnsupportedSystemError : public Error {
 public:
  using Error::Error;
};

class UncontrollablePairError : public Error {
 public:
  using Error::Error;
};

class UnstableGainError : public Error {
 public:
  using Error::Error;
};

class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

// Integration left the finite region (|state| above the blow-up threshold or
// a non-finite value appeared). Carries the first offending time.
class BlowUpError : public Error {
 public:
  BlowUpError(double time, const std::string& what)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

inline constexpr double kBlowUpThreshold = 1e6;

void RequireDim(const Vector& v, Eigen::Index n, std::string_view what);

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t Mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t HashString(std::string_view s);

// Deterministic RNG stream keyed by (master seed, stream name, index). Two
// streams with different keys are statistically independent; the same key
// always yields the same sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name = {},
            std::uint64_t index = 0);

  double Normal() { return normal_(engine_); }
  double Uniform() { return uniform_(engine_); }
  Vector NormalVector(Eigen::Index n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Runs body(i) for i in [0, n) on a pool of worker threads. Each index is
// processed exactly once; results must be written to index-owned slots so the
// outcome does not depend on scheduling.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& body,
                 std::size_t max_threads = 0);

}  // namespace ctrlflow

#endif  // CTRLFLOW_COMMON_HPP_
