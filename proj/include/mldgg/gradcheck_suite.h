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

#ifndef MLDGG_GRADCHECK_SUITE_H_
#define MLDGG_GRADCHECK_SUITE_H_

#include <cstdint>
#include <string>
#include <vector>

namespace mldgg {

struct GradCheckReport {
  std::string op;
  int instances = 0;
  double max_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int instances = 10;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Negates the analytic gradient of this operation (harness self-test).
  std::string flip_sign_of;
};

std::vector<std::string> gradcheck_operations();

/// Central-difference check of every differentiable operation on random
/// small instances (at most 6 nodes, dims at most 4).
std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& opts);

}  // namespace mldgg

#endif  // MLDGG_GRADCHECK_SUITE_H_
