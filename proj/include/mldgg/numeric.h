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

#ifndef MLDGG_NUMERIC_H_
#define MLDGG_NUMERIC_H_

#include <span>
#include <vector>

namespace mldgg {

inline constexpr double kLog2Pi = 1.8378770664093454836;

// log(sum(exp(v))) with max-shift. Throws on empty input.
double logsumexp(std::span<const double> v);

double stable_sigmoid(double x);

// log(sigmoid(x)) without cancellation.
double log_sigmoid(double x);

// log(1 + exp(x)).
double softplus(double x);

// Inverse of softplus for y > 0.
double softplus_inverse(double y);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace mldgg

#endif  // MLDGG_NUMERIC_H_
