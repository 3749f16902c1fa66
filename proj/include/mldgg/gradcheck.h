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

#ifndef MLDGG_GRADCHECK_H_
#define MLDGG_GRADCHECK_H_

#include <functional>

#include "mldgg/params.h"

namespace mldgg {

using ScalarLoss = std::function<double(const ParamGroup&)>;

/// Compares `analytic_grads` (values hold the gradient, same names and shapes
/// as `params`) against central differences of `loss_fn`. Returns the max
/// over entries of |a - n| / max(1e-8, |a| + |n|).
///
/// `loss_fn` must be deterministic; it is evaluated twice at the base point
/// and a mismatch throws std::runtime_error("loss not reproducible").
double finite_diff_check(const ScalarLoss& loss_fn, const ParamGroup& params,
                         const ParamGroup& analytic_grads, double epsilon);

double relative_error(double analytic, double numeric);

}  // namespace mldgg

#endif  // MLDGG_GRADCHECK_H_
