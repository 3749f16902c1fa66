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

#ifndef MLDGG_REPRESENTATION_LEARNER_H_
#define MLDGG_REPRESENTATION_LEARNER_H_

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mldgg/matrix.h"
#include "mldgg/params.h"
#include "mldgg/rng.h"

namespace mldgg {

enum class PriorMode { kJoint, kIndependent };

std::string to_string(PriorMode mode);
PriorMode prior_mode_from_string(const std::string& s);

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kCholeskyFloor = 1e-6;
inline constexpr double kMinLabelProb = 1e-30;

struct RepConfig {
  Index input_dim = 16;  // d, the GNN output width
  int semantic_dim = 8;  // k_s
  int variation_dim = 8;  // k_v
  int num_classes = 2;
  PriorMode prior = PriorMode::kJoint;
};

// Per-node diagonal Gaussians, one row per node.
struct GaussianPosterior {
  Matrix mean;
  Matrix log_var;  // clamped to [kLogVarMin, kLogVarMax]
};

// Two parallel affine heads per encoder: "mu_w", "mu_b", "lv_w", "lv_b".
struct EncoderParams {
  ParamGroup semantic;
  ParamGroup variation;
};

// Below about e^-1 the 1/sigma_r^2 gradient on R makes the inner loop diverge
// at the default learning rates.
inline constexpr double kLogSigmaRMin = -1.0;
inline constexpr double kLogSigmaRMax = 5.0;

// "w" ((k_s + k_v) x d), "b" (1 x d), "log_sigma_r" (1 x 1). The effective
// log sigma_r is clamped to [kLogSigmaRMin, kLogSigmaRMax]; the clamp passes
// no gradient.
struct DecoderParams {
  ParamGroup group;
  double raw_log_sigma_r() const { return group[2].value(0, 0); }
  double log_sigma_r() const {
    return std::clamp(raw_log_sigma_r(), kLogSigmaRMin, kLogSigmaRMax);
  }
};

/// Joint mode: N(0, L L^T) over (s, v) with L built from the lower triangle
/// of "chol"; its diagonal goes through softplus + kCholeskyFloor.
/// Independent mode: N(0, I) on s and v; "chol" is carried but unused.
struct PriorParams {
  PriorMode mode = PriorMode::kJoint;
  ParamGroup group;  // "chol"
};

// Affine map to class logits: "w" (in x C), "b" (1 x C).
struct ClassifierParams {
  static ClassifierParams init(Index input_dim, int num_classes, Rng& rng);
  Index input_dim() const { return group[0].value.rows(); }
  Index num_classes() const { return group[0].value.cols(); }
  ParamGroup group;
};

struct RepParams {
  static RepParams init(const RepConfig& cfg, Rng& rng);

  Index input_dim() const { return encoder.semantic[0].value.rows(); }
  Index semantic_dim() const { return encoder.semantic[0].value.cols(); }
  Index variation_dim() const { return encoder.variation[0].value.cols(); }

  // Deterministic iteration order: semantic, variation, decoder, prior,
  // classifier.
  std::vector<ParamGroup*> groups();
  std::vector<const ParamGroup*> groups() const;
  void zero_grads();

  EncoderParams encoder;
  DecoderParams decoder;
  PriorParams prior;
  ClassifierParams classifier;
};

// Raw parameter value that makes the effective Cholesky diagonal equal one.
double identity_cholesky_raw_diag();
Matrix effective_cholesky(const PriorParams& prior);

GaussianPosterior encode(const Matrix& r, const ParamGroup& head);
std::pair<GaussianPosterior, GaussianPosterior> encode(const Matrix& r,
                                                       const EncoderParams& params);

// mean + exp(log_var / 2) .* eps, eps ~ N(0, I).
Vector reparam_sample(const Vector& mean, const Vector& log_var, Rng& rng);

Vector decoder_mean(const Vector& s, const Vector& v, const DecoderParams& params);

// log N(r; mu_r(s, v), sigma_r^2 I).
double decoder_log_density(const Vector& r, const Vector& s, const Vector& v,
                           const DecoderParams& params);

// log p(s, v) under the prior; z = (s, v).
double prior_log_density(const Vector& z, const PriorParams& prior);

/// Adds scale * d log p(z) / d(chol) into prior grads and returns
/// d log p(z) / dz.
Vector prior_log_density_backward(const Vector& z, PriorParams& prior, double scale);

Vector classifier_logits(const Vector& s, const ClassifierParams& params);
Vector classify(const Vector& s, const ClassifierParams& params);

struct ElboResult {
  // Node-averaged terms: log q(y|r), weighted reconstruction, weighted
  // log prior ratio.
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  int clamped = 0;  // nodes where q(y|r) fell below kMinLabelProb
  double value() const { return t1 + t2 + t3; }
};

/// Self-normalized Monte-Carlo estimate of the label-weighted ELBO, averaged
/// over `nodes`. For node i, S reparameterized pairs (s_m, v_m) are drawn
/// from q(s|r)q(v|r) with rng.split(i); w_m is proportional to p(y|s_m).
///   T1 = log mean_m p(y|s_m)
///   T2 = sum_m w_m log p(r|s_m, v_m)
///   T3 = sum_m w_m [log p(s_m, v_m) - log q(s_m, v_m | r)]
/// When grad_scale != 0, grad_scale * d(value)/d(theta) is accumulated into
/// params and grad_scale * d(value)/dR is added into *d_r (n x d).
ElboResult elbo(const Matrix& r, std::span<const int> nodes,
                std::span<const int> labels, int num_samples, RepParams& params,
                const Rng& rng, double grad_scale = 0.0, Matrix* d_r = nullptr);

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

enum class PredictMode { kPosteriorMean, kMonteCarlo };

/// Argmax of p(y|s) with s the posterior mean (default) or the average of
/// p(y|s_m) over `num_samples` draws. Ties resolve to the lowest class.
std::vector<Prediction> predict(const Matrix& r, std::span<const int> nodes,
                                const RepParams& params,
                                PredictMode mode = PredictMode::kPosteriorMean,
                                int num_samples = 1, const Rng& rng = Rng(0));

/// Mean softmax cross-entropy of a linear head over rows of `r`. Gradient
/// handling matches `elbo`.
double cross_entropy(const Matrix& r, std::span<const int> nodes,
                     std::span<const int> labels, ClassifierParams& head,
                     double grad_scale = 0.0, Matrix* d_r = nullptr);

std::vector<Prediction> predict_head(const Matrix& r, std::span<const int> nodes,
                                     const ClassifierParams& head);

}  // namespace mldgg

#endif  // MLDGG_REPRESENTATION_LEARNER_H_
