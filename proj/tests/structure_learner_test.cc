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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "mldgg/gradcheck.h"
#include "mldgg/params.h"
#include "mldgg/rng.h"
#include "mldgg/structure_learner.h"
#include "oracles.h"

namespace mldgg {
namespace {

StructParams random_params(Index d, int pivots, std::uint64_t seed) {
  Rng rng(seed);
  return StructParams::init(d, pivots, rng);
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

TEST(EdgeProbs, ZeroInputGivesHalf) {
  Matrix f = edge_probs(Matrix::Zero(4, 3), random_params(3, 2, 1));
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) EXPECT_EQ(f(j, k), j == k ? 0.0 : 0.5);
  }
}

TEST(EdgeProbs, IdenticalLargeRowsSaturate) {
  StructParams p = random_params(2, 2, 1);
  p.group[0].value.setOnes();
  p.group[1].value.setIdentity();
  Matrix r(2, 2);
  r << 10, 10, 10, 10;
  EXPECT_GT(edge_probs(r, p)(0, 1), 1.0 - 1e-6);
}

TEST(EdgeProbs, MatchesDirectEvaluation) {
  StructParams p = random_params(2, 3, 4);
  Matrix r = random_matrix(4, 2, 5);
  EXPECT_TRUE(edge_probs(r, p).isApprox(oracle::edge_probs_direct(r, p), 1e-14));
}

TEST(EdgeProbs, DimensionMismatch) {
  EXPECT_THROW(edge_probs(Matrix::Zero(3, 4), random_params(3, 2, 1)), std::invalid_argument);
}

TEST(SampleStructures, ZeroProbabilityGivesEmptyGraphs) {
  Rng rng(1);
  for (const auto& s : sample_structures(Matrix::Zero(5, 5), 20, rng)) {
    EXPECT_TRUE(s.adjacency.isZero(0.0));
    EXPECT_EQ(s.log_prob, 0.0);
  }
}

TEST(SampleStructures, NearCertainEdge) {
  Matrix f = Matrix::Zero(4, 4);
  f(1, 3) = f(3, 1) = 1.0 - 1e-12;
  Rng rng(2);
  for (const auto& s : sample_structures(f, 100, rng)) EXPECT_EQ(s.adjacency(1, 3), 1.0);
}

TEST(SampleStructures, BernoulliFrequency) {
  Matrix f = Matrix::Constant(3, 3, 0.5);
  f.diagonal().setZero();
  Rng rng(3);
  Matrix counts = Matrix::Zero(3, 3);
  const int draws = 100000;
  for (const auto& s : sample_structures(f, draws, rng)) {
    counts += s.adjacency;
    ASSERT_TRUE(s.adjacency.isApprox(s.adjacency.transpose()));
    ASSERT_TRUE(s.adjacency.diagonal().isZero(0.0));
  }
  for (int j = 0; j < 3; ++j) {
    for (int k = j + 1; k < 3; ++k) EXPECT_NEAR(counts(j, k) / draws, 0.5, 0.01);
  }
}

TEST(SampleLogProb, KnownValues) {
  Matrix half = Matrix::Constant(3, 3, 0.5);
  half.diagonal().setZero();
  for (const Matrix& a : oracle::all_structures(3)) {
    EXPECT_NEAR(sample_log_prob(a, half), 3.0 * std::log(0.5), 1e-15);
  }
  EXPECT_EQ(sample_log_prob(Matrix::Zero(3, 3), Matrix::Zero(3, 3)), 0.0);
}

TEST(SampleLogProb, EnumerationSumsToOne) {
  Matrix f = edge_probs(random_matrix(3, 2, 7), random_params(2, 2, 8));
  double total = 0.0;
  for (const Matrix& a : oracle::all_structures(3)) total += std::exp(sample_log_prob(a, f));
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(SampleLogProb, ImpossibleSample) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = 1.0;
  try {
    sample_log_prob(a, Matrix::Zero(3, 3));
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_STREQ(e.what(), "impossible sample");
  }
}

TEST(StructureReward, Cases) {
  StructLearnerConfig cfg;
  cfg.alpha = 0.3;
  cfg.beta = 0.7;
  Matrix r = random_matrix(4, 3, 9);
  EXPECT_EQ(structure_reward(Matrix::Zero(4, 4), r, cfg), 0.0);

  Matrix same = Matrix::Ones(2, 3);
  Matrix edge(2, 2);
  edge << 0, 1, 1, 0;
  EXPECT_DOUBLE_EQ(structure_reward(edge, same, cfg), -0.7);

  for (const Matrix& a : oracle::all_structures(4)) {
    EXPECT_NEAR(structure_reward(a, r, cfg), oracle::reward(a, r, 0.3, 0.7), 1e-12);
  }
}

std::vector<StructSample> samples_with_rewards(const Matrix& f, const Matrix& r, int h,
                                               const StructLearnerConfig& cfg, Rng& rng) {
  auto samples = sample_structures(f, h, rng);
  for (auto& s : samples) s.reward = structure_reward(s.adjacency, r, cfg);
  return samples;
}

TEST(ReinforceSurrogate, SingleSampleIsZero) {
  StructLearnerConfig cfg;
  Matrix r = random_matrix(4, 2, 1);
  StructParams p = random_params(2, 2, 2);
  Rng rng(3);
  auto samples = samples_with_rewards(edge_probs(r, p), r, 1, cfg, rng);
  SurrogateResult res = reinforce_surrogate_loss(samples, edge_probs(r, p));
  EXPECT_EQ(res.baseline, samples[0].reward);
  EXPECT_EQ(res.loss, 0.0);
  EXPECT_TRUE(res.d_probs.isZero(0.0));
}

TEST(ReinforceSurrogate, EqualRewardsGiveZero) {
  Matrix r = random_matrix(4, 2, 1);
  StructParams p = random_params(2, 2, 2);
  Rng rng(3);
  auto samples = sample_structures(edge_probs(r, p), 6, rng);
  for (auto& s : samples) s.reward = -2.5;
  EXPECT_EQ(reinforce_surrogate_loss(samples, edge_probs(r, p)).loss, 0.0);
}

TEST(ReinforceSurrogate, NoSamplesThrows) {
  EXPECT_THROW(reinforce_surrogate_loss({}, Matrix::Zero(3, 3)), std::invalid_argument);
}

struct EstimatorStats {
  std::vector<double> mean;
  std::vector<double> stderr_;
};

// Mean and standard error of the estimator -dL_reg/dtheta over `draws`
// independent sets of H samples.
EstimatorStats estimator_stats(const Matrix& r, const StructParams& params,
                               const StructLearnerConfig& cfg, int draws, Rng rng) {
  const Matrix f = edge_probs(r, params);
  const std::size_t k = params.group.num_values();
  std::vector<double> sum(k, 0.0), sum_sq(k, 0.0);
  for (int t = 0; t < draws; ++t) {
    auto samples = samples_with_rewards(f, r, cfg.num_samples, cfg, rng);
    StructParams p = params;
    p.group.zero_grads();
    reinforce_loss_and_grad(samples, r, p, 1.0);
    auto g = p.group.flat_grads();
    for (std::size_t i = 0; i < k; ++i) {
      sum[i] -= g[i];
      sum_sq[i] += g[i] * g[i];
    }
  }
  EstimatorStats out;
  for (std::size_t i = 0; i < k; ++i) {
    const double m = sum[i] / draws;
    const double var = sum_sq[i] / draws - m * m;
    out.mean.push_back(m);
    out.stderr_.push_back(std::sqrt(var / draws));
  }
  return out;
}

// With the baseline including the sample itself, the estimator's mean is
// (1 - 1/H) times the exact gradient.
TEST(ReinforceEstimator, MeanIsShrunkExactGradient) {
  StructLearnerConfig cfg;
  cfg.num_samples = 5;
  cfg.alpha = 0.5;
  cfg.beta = 0.2;
  Matrix r = random_matrix(3, 2, 21);
  StructParams p = random_params(2, 2, 22);
  auto exact = oracle::expected_reward_gradient(r, p, cfg.alpha, cfg.beta);
  auto est = estimator_stats(r, p, cfg, 100000, Rng(23));
  const double shrink = 1.0 - 1.0 / cfg.num_samples;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    EXPECT_NEAR(est.mean[i], shrink * exact[i], 4.0 * est.stderr_[i]) << "coordinate " << i;
  }
}

TEST(ReinforceEstimator, ManySamplesWithinFivePercent) {
  StructLearnerConfig cfg;
  cfg.num_samples = 200;
  cfg.alpha = 0.5;
  cfg.beta = 0.2;
  Matrix r = random_matrix(3, 2, 21);
  StructParams p = random_params(2, 2, 22);
  auto exact = oracle::expected_reward_gradient(r, p, cfg.alpha, cfg.beta);
  auto est = estimator_stats(r, p, cfg, 5000, Rng(24));
  double scale = 0.0;
  for (double g : exact) scale = std::max(scale, std::abs(g));
  for (std::size_t i = 0; i < exact.size(); ++i) {
    EXPECT_LE(std::abs(est.mean[i] - exact[i]), 0.05 * std::max(std::abs(exact[i]), 0.1 * scale))
        << "coordinate " << i;
  }
}

TEST(EdgeProbsBackward, MatchesFiniteDifferences) {
  Matrix r = random_matrix(5, 3, 31);
  StructParams p = random_params(3, 2, 32);
  Matrix upstream = random_matrix(5, 5, 33);
  EdgeProbCache cache;
  edge_probs(r, p, &cache);
  p.group.zero_grads();
  edge_probs_backward(cache, upstream, p);
  auto loss = [&](const ParamGroup& g) {
    StructParams q;
    q.group = g;
    Matrix f = edge_probs(r, q);
    double total = 0.0;
    for (int j = 0; j < 5; ++j) {
      for (int k = 0; k < 5; ++k) {
        if (j != k) total += upstream(j, k) * f(j, k);
      }
    }
    return total;
  };
  EXPECT_LE(finite_diff_check(loss, p.group, p.group.grads_as_values(), 1e-6), 1e-5);
}

}  // namespace
}  // namespace mldgg
