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

// Reference computations used by the tests. Everything here is written
// from the definitions with plain loops and avoids the library's own
// numerical helpers, so a shared bug cannot make both sides agree.
#ifndef MLDGG_TESTS_ORACLES_H_
#define MLDGG_TESTS_ORACLES_H_

#include <vector>

#include "mldgg/matrix.h"
#include "mldgg/representation_learner.h"
#include "mldgg/structure_learner.h"

namespace mldgg::oracle {

double logsumexp(const std::vector<double>& v);
double sigmoid(double x);

// Every symmetric 0/1 adjacency on n nodes (2^(n(n-1)/2) of them).
std::vector<Matrix> all_structures(int n);

// F_jk = sigmoid(<z_j, z_k> / sqrt(P)), z = (r .* w_hat) * pivot_proj, zero
// diagonal. No clamping.
Matrix edge_probs_direct(const Matrix& r, const StructParams& params);

// prod over pairs of F^A (1 - F)^(1 - A).
double structure_prob(const Matrix& adjacency, const Matrix& probs);

double reward(const Matrix& adjacency, const Matrix& r, double alpha, double beta);

// E[B] = sum over all structures of Phi(A) B(A).
double expected_reward(const Matrix& r, const StructParams& params, double alpha,
                       double beta);

// Central differences of expected_reward in every entry of params.group,
// flattened in group order.
std::vector<double> expected_reward_gradient(const Matrix& r, const StructParams& params,
                                             double alpha, double beta, double h = 1e-6);

// D~^{-1/2} (A + I) D~^{-1/2} entry by entry.
Matrix normalized_adjacency(const Matrix& adjacency);

// Plain L-layer GCN on a single propagation matrix.
Matrix plain_gcn(const Matrix& x, const Matrix& prop, const std::vector<Matrix>& weights);

// sum_i log N(r_i; mu_i, sigma^2).
double gaussian_log_density(const Vector& r, const Vector& mu, double sigma);

struct ElboTerms {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  double value() const { return t1 + t2 + t3; }
};

// Limit of the self-normalized estimator for one node with k_s = k_v = 1,
// by a dense tensor-product Simpson rule over +-9 posterior sds.
ElboTerms elbo_quadrature(const Vector& r, int label, const RepParams& params,
                          int grid = 801);

// Base-2 Jensen-Shannon distance.
double js_distance(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace mldgg::oracle

#endif  // MLDGG_TESTS_ORACLES_H_
