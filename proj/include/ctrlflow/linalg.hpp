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

#ifndef CTRLFLOW_LINALG_HPP_
#define CTRLFLOW_LINALG_HPP_

#include "ctrlflow/common.hpp"

namespace ctrlflow {

// Matrix exponential by scaling and squaring with a degree-6 diagonal Pade
// approximant. The argument is halved until its 1-norm is at most 0.5.
Matrix Expm(const Matrix& a);

// Composite Simpson weights for n_points equally spaced nodes on [0, length].
// n_points must be odd and >= 3.
Eigen::VectorXd SimpsonWeights(int n_points, double length);

// Largest real part over the eigenvalues of a.
double SpectralAbscissa(const Matrix& a);

}  // namespace ctrlflow

#endif  // CTRLFLOW_LINALG_HPP_
