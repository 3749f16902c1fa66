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

#ifndef MLDGG_STRUCTURE_LEARNER_H_
#define MLDGG_STRUCTURE_LEARNER_H_

#include <vector>

#include "mldgg/matrix.h"
#include "mldgg/params.h"
#include "mldgg/rng.h"

namespace mldgg {

struct StructLearnerConfig {
  int num_samples = 5;  // H
  double alpha = 0.1;   // smoothness weight
  double beta = 0.1;    // sparsity weight
  int num_pivots = 10;  // P

  void validate() const;
};

/// Elementwise reweighting w_hat (1 x d) followed by a d x P pivot
/// projection. Edge scores are sigmoid(Z Z^T / sqrt(P)) with
/// Z = (R .* w_hat) * pivot_proj.
struct StructParams {
  static StructParams init(Index input_dim, int num_pivots, Rng& rng);

  const Matrix& w_hat() const { return group[0].value; }
  const Matrix& pivot_proj() const { return group[1].value; }
  Index input_dim() const { return group[1].value.rows(); }
  Index num_pivots() const { return group[1].value.cols(); }

  ParamGroup group;  // "w_hat", "pivot_proj"
};

// Bernoulli parameters are kept strictly below one so log(1 - F) is finite.
// edge_probs keeps F inside [kMinEdgeProb, kMaxEdgeProb] so that samples drawn
// before a parameter update keep a finite log-probability afterwards.
inline constexpr double kMinEdgeProb = 1e-12;
inline constexpr double kMaxEdgeProb = 1.0 - 1e-12;

struct EdgeProbCache {
  Matrix input;     // R
  Matrix weighted;  // R .* w_hat
  Matrix scores;    // Z
  Matrix probs;     // F
};

Matrix edge_probs(const Matrix& r, const StructParams& params,
                  EdgeProbCache* cache = nullptr);

/// Accumulates dL/d(params) into params.group grads given dL/dF. Only
/// off-diagonal entries of `d_probs` are read; each is treated as an
/// independent output. Writes dL/dR into `d_input` when non-null.
void edge_probs_backward(const EdgeProbCache& cache, const Matrix& d_probs,
                         StructParams& params, Matrix* d_input = nullptr);

struct StructSample {
  Matrix adjacency;  // symmetric 0/1, zero diagonal
  double log_prob = 0.0;
  double reward = 0.0;
};

std::vector<StructSample> sample_structures(const Matrix& probs, int num_samples,
                                            Rng& rng);

/// log Phi(A') over unordered pairs. Throws "impossible sample" when A'
/// contradicts a deterministic entry of F.
double sample_log_prob(const Matrix& adjacency, const Matrix& probs);

/// -alpha * sum_{j<k} A'_jk ||r_j - r_k||^2 - beta * (#edges of A').
double structure_reward(const Matrix& adjacency, const Matrix& r,
                        const StructLearnerConfig& cfg);

struct SurrogateResult {
  double loss = 0.0;
  double baseline = 0.0;
  Matrix d_probs;  // dL/dF, upper triangle only
};

/// L_reg = -(1/H) sum_h log Phi(A'_h; F) (B_h - mean B). Rewards are
/// constants. The log-probabilities are recomputed from `probs`.
SurrogateResult reinforce_surrogate_loss(const std::vector<StructSample>& samples,
                                         const Matrix& probs);

/// Convenience: F from (r, params), the surrogate, and its gradient scaled by
/// `grad_scale` accumulated into params. Returns the unscaled loss.
double reinforce_loss_and_grad(const std::vector<StructSample>& samples,
                               const Matrix& r, StructParams& params,
                               double grad_scale);

}  // namespace mldgg

#endif  // MLDGG_STRUCTURE_LEARNER_H_
