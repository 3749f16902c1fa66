// Copyright 2026 The MLDGG Authors.
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

#ifndef MLDGG_MATRIX_H_
#define MLDGG_MATRIX_H_

#include <cstddef>
#include <string_view>

#include <Eigen/Dense>

namespace mldgg {

// Row-major dense storage for every adjacency, feature and weight matrix.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

bool all_finite(const Matrix& m);

// Throws std::invalid_argument "<what>: expected RxC, got rxc" on mismatch.
void require_shape(const Matrix& m, Index rows, Index cols,
                   std::string_view what);

// Unordered pairs among n nodes.
inline Index num_pairs(Index n) { return n * (n - 1) / 2; }

}  // namespace mldgg

#endif  // MLDGG_MATRIX_H_
