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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "mldgg/numeric.h"
#include "mldgg/params.h"
#include "mldgg/representation_learner.h"
#include "mldgg/rng.h"
#include "oracles.h"

namespace mldgg {
namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

RepParams make_params(Index d, int ks, int kv, int classes, PriorMode mode, std::uint64_t seed) {
  RepConfig cfg;
  cfg.input_dim = d;
  cfg.semantic_dim = ks;
  cfg.variation_dim = kv;
  cfg.num_classes = classes;
  cfg.prior = mode;
  Rng rng(seed);
  return RepParams::init(cfg, rng);
}

void zero_group(ParamGroup& g) {
  for (auto& p : g) p.value.setZero();
}

TEST(Encode, ZeroWeightsGiveUnitGaussian) {
  RepParams p = make_params(3, 2, 2, 2, PriorMode::kJoint, 1);
  zero_group(p.encoder.semantic);
  Rng rng(2);
  GaussianPosterior q = encode(random_matrix(4, 3, rng), p.encoder.semantic);
  EXPECT_TRUE(q.mean.isZero(0.0));
  EXPECT_TRUE(q.log_var.isZero(0.0));
}

TEST(Encode, LinearInInputWithZeroBias) {
  RepParams p = make_params(3, 2, 2, 2, PriorMode::kJoint, 1);
  p.encoder.semantic[1].value.setZero();
  Rng rng(2);
  Matrix r = random_matrix(4, 3, rng);
  GaussianPosterior a = encode(r, p.encoder.semantic);
  GaussianPosterior b = encode(2.0 * r, p.encoder.semantic);
  EXPECT_TRUE(b.mean.isApprox(2.0 * a.mean, 1e-14));
}

TEST(Encode, MatchesDirectAffine) {
  RepParams p = make_params(3, 2, 2, 2, PriorMode::kJoint, 1);
  Rng rng(3);
  for (auto& prm : p.encoder.variation) prm.value = random_matrix(prm.value.rows(), prm.value.cols(), rng);
  Matrix r = random_matrix(5, 3, rng);
  GaussianPosterior q = encode(r, p.encoder.variation);
  for (Index i = 0; i < 5; ++i) {
    for (Index k = 0; k < 2; ++k) {
      double mu = p.encoder.variation[1].value(0, k), lv = p.encoder.variation[3].value(0, k);
      for (Index c = 0; c < 3; ++c) {
        mu += r(i, c) * p.encoder.variation[0].value(c, k);
        lv += r(i, c) * p.encoder.variation[2].value(c, k);
      }
      EXPECT_NEAR(q.mean(i, k), mu, 1e-14);
      EXPECT_NEAR(q.log_var(i, k), std::clamp(lv, kLogVarMin, kLogVarMax), 1e-14);
    }
  }
}

TEST(Reparam, CollapsedVariance) {
  Vector mu(3), lv = Vector::Constant(3, kLogVarMin);
  mu << 0.5, -1.0, 2.0;
  Rng rng(4);
  const double sd = std::exp(0.5 * kLogVarMin);
  for (int t = 0; t < 1000; ++t) {
    Vector s = reparam_sample(mu, lv, rng);
    ASSERT_LE((s - mu).cwiseAbs().maxCoeff(), 5.0 * sd);
  }
}

TEST(Reparam, LawOfLargeNumbers) {
  Vector mu(2), lv(2);
  mu << 1.5, -0.3;
  lv << 0.4, -1.2;
  Rng rng(5);
  const int n = 100000;
  Vector sum = Vector::Zero(2);
  for (int t = 0; t < n; ++t) sum += reparam_sample(mu, lv, rng);
  for (Index i = 0; i < 2; ++i) {
    EXPECT_NEAR(sum(i) / n, mu(i), 4.0 * std::exp(0.5 * lv(i)) / std::sqrt(n));
  }
}

TEST(Reparam, PathwiseDerivativeInMeanIsOne) {
  Vector mu(1), lv(1);
  mu << 0.7;
  lv << 0.3;
  const double h = 1e-4;
  auto mean_of = [&](double m) {
    Vector mm = Vector::Constant(1, m);
    Rng rng(6);  // common random numbers
    double s = 0.0;
    for (int t = 0; t < 1000; ++t) s += reparam_sample(mm, lv, rng)(0);
    return s / 1000.0;
  };
  EXPECT_NEAR((mean_of(mu(0) + h) - mean_of(mu(0) - h)) / (2 * h), 1.0, 1e-8);
}

TEST(Decoder, ZeroResidualUnitSigma) {
  RepParams p = make_params(4, 1, 1, 2, PriorMode::kJoint, 1);
  zero_group(p.decoder.group);
  Vector s = Vector::Constant(1, 0.3), v = Vector::Constant(1, -0.2);
  Vector r = Vector::Zero(4);
  EXPECT_NEAR(decoder_log_density(r, s, v, p.decoder), -2.0 * std::log(2.0 * M_PI), 1e-14);
}

TEST(Decoder, DecreasesWithResidual) {
  RepParams p = make_params(3, 1, 1, 2, PriorMode::kJoint, 1);
  Vector s = Vector::Constant(1, 0.3), v = Vector::Constant(1, -0.2);
  Vector base = decoder_mean(s, v, p.decoder);
  Vector dir = Vector::Ones(3);
  double prev = decoder_log_density(base, s, v, p.decoder);
  for (double t = 0.5; t < 5.0; t += 0.5) {
    double now = decoder_log_density(base + t * dir, s, v, p.decoder);
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Decoder, MatchesGaussianDensity) {
  RepParams p = make_params(3, 2, 1, 2, PriorMode::kJoint, 2);
  p.decoder.group[2].value(0, 0) = 0.4;
  Rng rng(7);
  Vector s = random_matrix(2, 1, rng), v = random_matrix(1, 1, rng);
  Vector r = random_matrix(3, 1, rng);
  Vector mu = decoder_mean(s, v, p.decoder);
  EXPECT_NEAR(decoder_log_density(r, s, v, p.decoder),
              oracle::gaussian_log_density(r, mu, std::exp(0.4)), 1e-12);
}

TEST(Decoder, LogSigmaIsClamped) {
  RepParams p = make_params(3, 1, 1, 2, PriorMode::kJoint, 2);
  p.decoder.group[2].value(0, 0) = -50.0;
  EXPECT_EQ(p.decoder.log_sigma_r(), kLogSigmaRMin);
  p.decoder.group[2].value(0, 0) = 50.0;
  EXPECT_EQ(p.decoder.log_sigma_r(), kLogSigmaRMax);
}

TEST(Classifier, ZeroWeightsUniform) {
  RepParams p = make_params(3, 2, 1, 4, PriorMode::kJoint, 1);
  zero_group(p.classifier.group);
  Vector probs = classify(Vector::Constant(2, 1.7), p.classifier);
  for (Index c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(probs(c), 0.25);
}

TEST(Classifier, ShiftInvariantAndMatchesSoftmax) {
  RepParams p = make_params(3, 2, 1, 3, PriorMode::kJoint, 1);
  Vector s(2);
  s << 0.4, -1.1;
  Vector a = classify(s, p.classifier);
  p.classifier.group[1].value.array() += 5.0;
  Vector b = classify(s, p.classifier);
  EXPECT_TRUE(a.isApprox(b, 1e-14));
  Vector logits = classifier_logits(s, p.classifier);
  std::vector<double> l(logits.data(), logits.data() + 3);
  const double lse = oracle::logsumexp(l);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(b(c), std::exp(l[c] - lse), 1e-15);
}

TEST(Prior, IdentityCholeskyMatchesIndependent) {
  RepParams joint = make_params(3, 2, 2, 2, PriorMode::kJoint, 1);
  RepParams ind = make_params(3, 2, 2, 2, PriorMode::kIndependent, 1);
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    Vector z = random_matrix(4, 1, rng);
    EXPECT_NEAR(prior_log_density(z, joint.prior), prior_log_density(z, ind.prior), 1e-9);
  }
}

struct ElboFixture {
  Rng rng{11};
  Matrix r = random_matrix(8, 3, rng);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  std::vector<int> nodes = {0, 1, 2, 3, 4, 5, 6, 7};
};

TEST(Elbo, UniformClassifierGivesLogOneOverC) {
  ElboFixture f;
  RepParams p = make_params(3, 2, 2, 3, PriorMode::kJoint, 1);
  zero_group(p.classifier.group);
  ElboResult e = elbo(f.r, f.nodes, f.labels, 7, p, Rng(3));
  EXPECT_NEAR(e.t1, std::log(1.0 / 3.0), 1e-14);
  ElboResult e1 = elbo(f.r, f.nodes, f.labels, 1, p, Rng(3));
  EXPECT_NEAR(e1.t1, std::log(1.0 / 3.0), 1e-14);
}

TEST(Elbo, IdentityCholeskyT3MatchesIndependent) {
  ElboFixture f;
  RepParams joint = make_params(3, 2, 2, 3, PriorMode::kJoint, 1);
  RepParams ind = make_params(3, 2, 2, 3, PriorMode::kIndependent, 1);
  ElboResult a = elbo(f.r, f.nodes, f.labels, 5, joint, Rng(4));
  ElboResult b = elbo(f.r, f.nodes, f.labels, 5, ind, Rng(4));
  EXPECT_NEAR(a.t3, b.t3, 1e-9);
  EXPECT_DOUBLE_EQ(a.t1, b.t1);
  EXPECT_DOUBLE_EQ(a.t2, b.t2);
}

TEST(Elbo, DeterministicForFixedRng) {
  ElboFixture f;
  RepParams p = make_params(3, 2, 2, 3, PriorMode::kJoint, 1);
  EXPECT_EQ(elbo(f.r, f.nodes, f.labels, 4, p, Rng(9)).value(),
            elbo(f.r, f.nodes, f.labels, 4, p, Rng(9)).value());
}

TEST(Elbo, DegenerateClassifierIsCounted) {
  ElboFixture f;
  RepParams p = make_params(3, 1, 1, 3, PriorMode::kJoint, 1);
  zero_group(p.classifier.group);
  p.classifier.group[1].value(0, 0) = 200.0;  // class 0 always, others ~e^-200
  ElboResult e = elbo(f.r, f.nodes, f.labels, 3, p, Rng(1));
  EXPECT_EQ(e.clamped, 5);
  EXPECT_TRUE(std::isfinite(e.value()));
}

TEST(Elbo, ErrorsOnBadInput) {
  ElboFixture f;
  RepParams p = make_params(3, 1, 1, 3, PriorMode::kJoint, 1);
  std::vector<int> none;
  EXPECT_THROW(elbo(f.r, none, f.labels, 1, p, Rng(1)), std::invalid_argument);
  EXPECT_THROW(elbo(f.r, f.nodes, f.labels, 0, p, Rng(1)), std::invalid_argument);
}

// Shared toy for the quadrature comparison: k_s = k_v = 1, d = 2, C = 3.
RepParams quadrature_toy(PriorMode mode) {
  RepParams p = make_params(2, 1, 1, 3, mode, 5);
  Rng rng(6);
  for (ParamGroup* g : p.groups()) {
    for (auto& prm : *g) prm.value = random_matrix(prm.value.rows(), prm.value.cols(), rng, 0.5);
  }
  p.prior.group[0].value(0, 1) = 0.0;  // above the diagonal, unused
  p.decoder.group[2].value(0, 0) = 0.2;
  return p;
}

TEST(Elbo, MatchesQuadrature) {
  for (PriorMode mode : {PriorMode::kJoint, PriorMode::kIndependent}) {
    RepParams p = quadrature_toy(mode);
    Matrix r(1, 2);
    r << 0.8, -0.4;
    std::vector<int> labels = {1}, nodes = {0};
    ElboResult mc = elbo(r, nodes, labels, 100000, p, Rng(8));
    oracle::ElboTerms exact = oracle::elbo_quadrature(r.row(0).transpose(), 1, p);
    EXPECT_NEAR(mc.value(), exact.value(), 0.01 * std::abs(exact.value())) << to_string(mode);
    EXPECT_NEAR(mc.t1, exact.t1, 0.01 * std::abs(exact.t1));
  }
}

TEST(Predict, UniformClassifierTiesToZero) {
  ElboFixture f;
  RepParams p = make_params(3, 2, 2, 3, PriorMode::kJoint, 1);
  zero_group(p.classifier.group);
  for (const Prediction& pr : predict(f.r, f.nodes, p)) {
    EXPECT_EQ(pr.label, 0);
    EXPECT_NEAR(pr.confidence, 1.0 / 3.0, 1e-15);
  }
}

TEST(Predict, PosteriorMeanIgnoresRng) {
  ElboFixture f;
  RepParams p = make_params(3, 2, 2, 3, PriorMode::kJoint, 1);
  auto a = predict(f.r, f.nodes, p, PredictMode::kPosteriorMean, 1, Rng(1));
  auto b = predict(f.r, f.nodes, p, PredictMode::kPosteriorMean, 1, Rng(2));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_EQ(a[i].confidence, b[i].confidence);
  }
}

TEST(Predict, MonteCarloAgreesOnSeparatedToy) {
  // Two classes separated along the single semantic coordinate.
  RepParams p = make_params(1, 1, 1, 2, PriorMode::kJoint, 1);
  zero_group(p.encoder.semantic);
  p.encoder.semantic[0].value(0, 0) = 1.0;    // mu_s = r
  p.encoder.semantic[3].value(0, 0) = -4.0;   // sd ~ 0.135
  zero_group(p.classifier.group);
  p.classifier.group[0].value(0, 0) = -4.0;
  p.classifier.group[0].value(0, 1) = 4.0;
  Rng rng(3);
  Matrix r(200, 1);
  std::vector<int> nodes(200);
  for (int i = 0; i < 200; ++i) {
    r(i, 0) = (i % 2 ? 1.0 : -1.0) + 0.3 * rng.normal();
    nodes[i] = i;
  }
  auto det = predict(r, nodes, p);
  auto mc = predict(r, nodes, p, PredictMode::kMonteCarlo, 10000, Rng(4));
  int agree = 0;
  for (int i = 0; i < 200; ++i) agree += det[i].label == mc[i].label;
  EXPECT_GE(agree, 198);
}

TEST(CrossEntropy, UniformHeadIsLogC) {
  ElboFixture f;
  Rng rng(1);
  ClassifierParams head = ClassifierParams::init(3, 3, rng);
  zero_group(head.group);
  EXPECT_NEAR(cross_entropy(f.r, f.nodes, f.labels, head), std::log(3.0), 1e-15);
}

}  // namespace
}  // namespace mldgg
