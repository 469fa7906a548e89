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

#include "ctrlflow/linalg.hpp"

#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace ctrlflow {

Matrix Expm(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("expm: matrix must be square");
  const Eigen::Index n = a.rows();
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  }
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  // Pade(6,6): c_k = (12-k)! 6! / (12! k! (6-k)!).
  constexpr std::array<double, 7> c = {
      1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0,
      1.0 / 665280.0};
  const Matrix ident = Matrix::Identity(n, n);
  Matrix power = ident;
  Matrix num = c[0] * ident;
  Matrix den = c[0] * ident;
  for (int k = 1; k <= 6; ++k) {
    power = power * scaled;
    num += c[k] * power;
    den += ((k % 2) ? -c[k] : c[k]) * power;
  }
  Matrix result = den.partialPivLu().solve(num);
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Eigen::VectorXd SimpsonWeights(int n_points, double length) {
  if (n_points < 3 || n_points % 2 == 0) {
    throw ConfigError("Simpson rule needs an odd number of nodes >= 3");
  }
  const double h = length / (n_points - 1);
  Eigen::VectorXd w(n_points);
  for (int i = 0; i < n_points; ++i) {
    if (i == 0 || i == n_points - 1) {
      w[i] = 1.0;
    } else {
      w[i] = (i % 2) ? 4.0 : 2.0;
    }
  }
  return w * (h / 3.0);
}

double SpectralAbscissa(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace ctrlflow
