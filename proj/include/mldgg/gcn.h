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

#ifndef MLDGG_GCN_H_
#define MLDGG_GCN_H_

#include <cstdint>
#include <vector>

#include "mldgg/matrix.h"
#include "mldgg/params.h"
#include "mldgg/rng.h"

namespace mldgg {

/// Weight matrices W_0..W_{L-1} ("w0", "w1", ...), W_l is d_l x d_{l+1}.
struct GnnParams {
  // dims = {D, hidden..., d}; one layer per consecutive pair.
  static GnnParams init(const std::vector<Index>& dims, Rng& rng);

  std::size_t num_layers() const { return group.size(); }
  const Matrix& weight(std::size_t l) const { return group[l].value; }
  Index input_dim() const { return group[0].value.rows(); }
  Index output_dim() const { return group[group.size() - 1].value.cols(); }

  ParamGroup group;
};

struct GcnCache {
  Matrix mixed_adj;                // lambda * A_hat + (1 - lambda) * A'_hat
  std::vector<Matrix> propagated;  // mixed_adj * R_l, per layer
  std::vector<Matrix> pre_act;     // propagated_l * W_l, per layer
  std::uint64_t param_fingerprint = 0;
  bool valid = false;
};

/// R_{l+1} = act(lambda * A_hat R_l W_l + (1 - lambda) * A'_hat R_l W_l),
/// R_0 = X, ReLU on hidden layers, identity on the last.
Matrix gcn_forward(const Matrix& x, const Matrix& a_hat, const Matrix& a_prime_hat,
                   const GnnParams& params, double lambda,
                   GcnCache* cache = nullptr);

/// Accumulates weight gradients into params.group and writes dL/dX into
/// `d_input` when non-null. Throws if `cache` does not match `params`.
void gcn_backward(const GcnCache& cache, const Matrix& d_output, GnnParams& params,
                  Matrix* d_input = nullptr);

std::uint64_t fingerprint(const ParamGroup& group);

}  // namespace mldgg

#endif  // MLDGG_GCN_H_
