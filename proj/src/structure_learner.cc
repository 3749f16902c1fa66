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

#include "mldgg/structure_learner.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mldgg/numeric.h"

namespace mldgg {

void StructLearnerConfig::validate() const {
  if (num_samples < 1) throw std::invalid_argument("num_samples: must be >= 1");
  if (num_pivots < 1) throw std::invalid_argument("num_pivots: must be >= 1");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha: must be >= 0");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta: must be >= 0");
}

StructParams StructParams::init(Index input_dim, int num_pivots, Rng& rng) {
  if (input_dim < 1 || num_pivots < 1) {
    throw std::invalid_argument("StructParams: dimensions must be positive");
  }
  StructParams p;
  p.group.add("w_hat", Matrix::Ones(1, input_dim));
  p.group.add("pivot_proj", glorot_uniform(input_dim, num_pivots, rng));
  return p;
}

Matrix edge_probs(const Matrix& r, const StructParams& params,
                  EdgeProbCache* cache) {
  if (r.cols() != params.input_dim() || params.w_hat().cols() != r.cols()) {
    throw std::invalid_argument(fmt::format(
        "edge_probs: representation dim {} does not match structure params dim {}",
        r.cols(), params.input_dim()));
  }
  const Index n = r.rows();
  Matrix weighted = r.array().rowwise() * params.w_hat().row(0).array();
  Matrix scores = weighted * params.pivot_proj();
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(params.num_pivots()));
  Matrix logits = (scores * scores.transpose()) * inv_sqrt_p;
  Matrix probs = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = j + 1; k < n; ++k) {
      double f = std::clamp(stable_sigmoid(logits(j, k)), kMinEdgeProb, kMaxEdgeProb);
      probs(j, k) = f;
      probs(k, j) = f;
    }
  }
  if (cache != nullptr) {
    cache->input = r;
    cache->weighted = std::move(weighted);
    cache->scores = std::move(scores);
    cache->probs = probs;
  }
  return probs;
}

void edge_probs_backward(const EdgeProbCache& cache, const Matrix& d_probs,
                         StructParams& params, Matrix* d_input) {
  const Index n = cache.probs.rows();
  require_shape(d_probs, n, n, "edge_probs_backward: d_probs");
  const double inv_sqrt_p = 1.0 / std::sqrt(static_cast<double>(params.num_pivots()));

  // dL/d(logit) for each ordered off-diagonal entry; saturated entries are
  // clamped and carry no gradient.
  Matrix d_logits = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      if (j == k || d_probs(j, k) == 0.0) continue;
      double f = cache.probs(j, k);
      if (f >= kMaxEdgeProb || f <= kMinEdgeProb) continue;
      d_logits(j, k) = d_probs(j, k) * f * (1.0 - f);
    }
  }
  Matrix d_scores = (d_logits + d_logits.transpose()) * cache.scores * inv_sqrt_p;
  params.group[1].grad += cache.weighted.transpose() * d_scores;
  Matrix d_weighted = d_scores * params.pivot_proj().transpose();
  params.group[0].grad +=
      (d_weighted.array() * cache.input.array()).colwise().sum().matrix();
  if (d_input != nullptr) {
    *d_input = d_weighted.array().rowwise() * params.w_hat().row(0).array();
  }
}

std::vector<StructSample> sample_structures(const Matrix& probs, int num_samples,
                                            Rng& rng) {
  const Index n = probs.rows();
  require_shape(probs, n, n, "sample_structures");
  std::vector<StructSample> out;
  out.reserve(num_samples);
  for (int h = 0; h < num_samples; ++h) {
    StructSample s;
    s.adjacency = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index k = j + 1; k < n; ++k) {
        if (rng.uniform() < probs(j, k)) {
          s.adjacency(j, k) = 1.0;
          s.adjacency(k, j) = 1.0;
        }
      }
    }
    s.log_prob = sample_log_prob(s.adjacency, probs);
    out.push_back(std::move(s));
  }
  return out;
}

double sample_log_prob(const Matrix& adjacency, const Matrix& probs) {
  const Index n = probs.rows();
  require_shape(adjacency, n, n, "sample_log_prob: adjacency");
  require_shape(probs, n, n, "sample_log_prob: probs");
  double total = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index k = j + 1; k < n; ++k) {
      double f = probs(j, k);
      if (adjacency(j, k) != 0.0) {
        if (f <= 0.0) throw std::domain_error("impossible sample");
        total += std::log(f);
      } else {
        if (f >= 1.0) throw std::domain_error("impossible sample");
        total += std::log1p(-f);
      }
    }
  }
  return total;
}

double structure_reward(const Matrix& adjacency, const Matrix& r,
                        const StructLearnerConfig& cfg) {
  const Index n = adjacency.rows();
  require_shape(adjacency, n, n, "structure_reward: adjacency");
  if (r.rows() != n) {
    throw std::invalid_argument("structure_reward: representation rows mismatch");
  }
  double smooth = 0.0;
  double edges = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index k = j + 1; k < n; ++k) {
      if (adjacency(j, k) == 0.0) continue;
      smooth += (r.row(j) - r.row(k)).squaredNorm();
      edges += 1.0;
    }
  }
  return -cfg.alpha * smooth - cfg.beta * edges;
}

SurrogateResult reinforce_surrogate_loss(const std::vector<StructSample>& samples,
                                         const Matrix& probs) {
  if (samples.empty()) {
    throw std::invalid_argument("reinforce_surrogate_loss: no samples (H = 0)");
  }
  const Index n = probs.rows();
  const double h = static_cast<double>(samples.size());
  SurrogateResult out;
  for (const auto& s : samples) out.baseline += s.reward;
  out.baseline /= h;
  out.d_probs = Matrix::Zero(n, n);
  for (const auto& s : samples) {
    const double advantage = s.reward - out.baseline;
    out.loss -= sample_log_prob(s.adjacency, probs) * advantage / h;
    if (advantage == 0.0) continue;
    for (Index j = 0; j < n; ++j) {
      for (Index k = j + 1; k < n; ++k) {
        double f = probs(j, k);
        double d_log = s.adjacency(j, k) != 0.0 ? 1.0 / f : -1.0 / (1.0 - f);
        out.d_probs(j, k) -= d_log * advantage / h;
      }
    }
  }
  return out;
}

double reinforce_loss_and_grad(const std::vector<StructSample>& samples,
                               const Matrix& r, StructParams& params,
                               double grad_scale) {
  EdgeProbCache cache;
  Matrix probs = edge_probs(r, params, &cache);
  SurrogateResult res = reinforce_surrogate_loss(samples, probs);
  if (grad_scale != 0.0) {
    edge_probs_backward(cache, res.d_probs * grad_scale, params);
  }
  return res.loss;
}

}  // namespace mldgg
