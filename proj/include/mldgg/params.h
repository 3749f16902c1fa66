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

#ifndef MLDGG_PARAMS_H_
#define MLDGG_PARAMS_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mldgg/matrix.h"

namespace mldgg {

class Rng;

struct DiffParam {
  DiffParam(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value
};

/// Ordered, name-unique list of parameters. Iteration order is insertion
/// order, so flattening is stable across runs.
class ParamGroup {
 public:
  ParamGroup() = default;

  DiffParam& add(std::string name, Matrix value);

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }

  DiffParam& operator[](std::size_t i) { return params_[i]; }
  const DiffParam& operator[](std::size_t i) const { return params_[i]; }

  DiffParam& at(std::string_view name);
  const DiffParam& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grads();
  void sgd_step(double lr);

  // Total scalar count over all parameters.
  std::size_t num_values() const;

  // A group with the same names whose values are this group's gradients.
  ParamGroup grads_as_values() const;

  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  void set_flat_values(std::span<const double> flat);
  void add_flat_grads(std::span<const double> flat);

 private:
  std::vector<DiffParam> params_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Index rows, Index cols, Rng& rng);

}  // namespace mldgg

#endif  // MLDGG_PARAMS_H_
