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

#include "mldgg/representation_learner.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "mldgg/numeric.h"

namespace mldgg {

std::string to_string(PriorMode mode) {
  return mode == PriorMode::kJoint ? "joint" : "independent";
}

PriorMode prior_mode_from_string(const std::string& s) {
  if (s == "joint") return PriorMode::kJoint;
  if (s == "independent") return PriorMode::kIndependent;
  throw std::invalid_argument(fmt::format("prior: unknown mode '{}'", s));
}

namespace {

ParamGroup make_encoder_head(Index in, int out, Rng& rng) {
  ParamGroup g;
  g.add("mu_w", glorot_uniform(in, out, rng));
  g.add("mu_b", Matrix::Zero(1, out));
  g.add("lv_w", glorot_uniform(in, out, rng));
  g.add("lv_b", Matrix::Zero(1, out));
  return g;
}

}  // namespace

ClassifierParams ClassifierParams::init(Index input_dim, int num_classes, Rng& rng) {
  ClassifierParams c;
  c.group.add("w", glorot_uniform(input_dim, num_classes, rng));
  c.group.add("b", Matrix::Zero(1, num_classes));
  return c;
}

double identity_cholesky_raw_diag() { return softplus_inverse(1.0 - kCholeskyFloor); }

RepParams RepParams::init(const RepConfig& cfg, Rng& rng) {
  if (cfg.semantic_dim < 1 || cfg.variation_dim < 1) {
    throw std::invalid_argument("RepConfig: latent dims must be >= 1");
  }
  if (cfg.num_classes < 1 || cfg.input_dim < 1) {
    throw std::invalid_argument("RepConfig: input dim and classes must be >= 1");
  }
  RepParams p;
  p.encoder.semantic = make_encoder_head(cfg.input_dim, cfg.semantic_dim, rng);
  p.encoder.variation = make_encoder_head(cfg.input_dim, cfg.variation_dim, rng);
  const Index k = cfg.semantic_dim + cfg.variation_dim;
  p.decoder.group.add("w", glorot_uniform(k, cfg.input_dim, rng));
  p.decoder.group.add("b", Matrix::Zero(1, cfg.input_dim));
  p.decoder.group.add("log_sigma_r", Matrix::Zero(1, 1));
  p.prior.mode = cfg.prior;
  Matrix chol = Matrix::Zero(k, k);
  chol.diagonal().setConstant(identity_cholesky_raw_diag());
  p.prior.group.add("chol", chol);
  p.classifier = ClassifierParams::init(cfg.semantic_dim, cfg.num_classes, rng);
  return p;
}

std::vector<ParamGroup*> RepParams::groups() {
  return {&encoder.semantic, &encoder.variation, &decoder.group, &prior.group,
          &classifier.group};
}

std::vector<const ParamGroup*> RepParams::groups() const {
  return {&encoder.semantic, &encoder.variation, &decoder.group, &prior.group,
          &classifier.group};
}

void RepParams::zero_grads() {
  for (ParamGroup* g : groups()) g->zero_grads();
}

Matrix effective_cholesky(const PriorParams& prior) {
  const Matrix& raw = prior.group[0].value;
  Matrix l = raw.triangularView<Eigen::StrictlyLower>();
  for (Index i = 0; i < raw.rows(); ++i) {
    l(i, i) = softplus(raw(i, i)) + kCholeskyFloor;
  }
  return l;
}

GaussianPosterior encode(const Matrix& r, const ParamGroup& head) {
  const Matrix& mu_w = head[0].value;
  if (r.cols() != mu_w.rows()) {
    throw std::invalid_argument(fmt::format(
        "encode: representation dim {} does not match encoder input {}", r.cols(),
        mu_w.rows()));
  }
  GaussianPosterior q;
  q.mean = (r * mu_w).rowwise() + head[1].value.row(0);
  q.log_var = ((r * head[2].value).rowwise() + head[3].value.row(0))
                  .cwiseMax(kLogVarMin)
                  .cwiseMin(kLogVarMax);
  return q;
}

std::pair<GaussianPosterior, GaussianPosterior> encode(const Matrix& r,
                                                       const EncoderParams& params) {
  return {encode(r, params.semantic), encode(r, params.variation)};
}

Vector reparam_sample(const Vector& mean, const Vector& log_var, Rng& rng) {
  Vector out(mean.size());
  for (Index i = 0; i < mean.size(); ++i) {
    out(i) = mean(i) + std::exp(0.5 * log_var(i)) * rng.normal();
  }
  return out;
}

Vector decoder_mean(const Vector& s, const Vector& v, const DecoderParams& params) {
  Vector z(s.size() + v.size());
  z << s, v;
  return params.group[0].value.transpose() * z +
         params.group[1].value.row(0).transpose();
}

double decoder_log_density(const Vector& r, const Vector& s, const Vector& v,
                           const DecoderParams& params) {
  Vector resid = r - decoder_mean(s, v, params);
  const double log_sigma = params.log_sigma_r();
  const double d = static_cast<double>(r.size());
  return -0.5 * d * kLog2Pi - d * log_sigma -
         0.5 * resid.squaredNorm() * std::exp(-2.0 * log_sigma);
}

double prior_log_density(const Vector& z, const PriorParams& prior) {
  const double k = static_cast<double>(z.size());
  if (prior.mode == PriorMode::kIndependent) {
    return -0.5 * k * kLog2Pi - 0.5 * z.squaredNorm();
  }
  Matrix l = effective_cholesky(prior);
  require_shape(l, z.size(), z.size(), "prior_log_density: chol");
  Vector u = l.triangularView<Eigen::Lower>().solve(z);
  return -0.5 * k * kLog2Pi - l.diagonal().array().log().sum() - 0.5 * u.squaredNorm();
}

Vector prior_log_density_backward(const Vector& z, PriorParams& prior, double scale) {
  if (prior.mode == PriorMode::kIndependent) return -z;
  const Matrix& raw = prior.group[0].value;
  Matrix l = effective_cholesky(prior);
  Vector u = l.triangularView<Eigen::Lower>().solve(z);
  Vector c = l.transpose().triangularView<Eigen::Upper>().solve(u);
  if (scale != 0.0) {
    Matrix& grad = prior.group[0].grad;
    for (Index i = 0; i < l.rows(); ++i) {
      for (Index j = 0; j < i; ++j) grad(i, j) += scale * c(i) * u(j);
      double d_diag = c(i) * u(i) - 1.0 / l(i, i);
      grad(i, i) += scale * d_diag * stable_sigmoid(raw(i, i));
    }
  }
  return -c;
}

Vector classifier_logits(const Vector& s, const ClassifierParams& params) {
  if (s.size() != params.input_dim()) {
    throw std::invalid_argument("classify: input dim mismatch");
  }
  return params.group[0].value.transpose() * s + params.group[1].value.row(0).transpose();
}

Vector classify(const Vector& s, const ClassifierParams& params) {
  Vector logits = classifier_logits(s, params);
  std::vector<double> p = softmax(std::span<const double>(logits.data(), logits.size()));
  return Eigen::Map<Vector>(p.data(), static_cast<Index>(p.size()));
}

namespace {

double log_softmax_at(const Vector& logits, int y, Vector* probs) {
  double lse = logsumexp(std::span<const double>(logits.data(), logits.size()));
  if (probs != nullptr) *probs = (logits.array() - lse).exp();
  return logits(y) - lse;
}

void check_nodes(std::span<const int> nodes, std::span<const int> labels, Index n,
                 const char* what) {
  if (nodes.empty()) throw std::invalid_argument(fmt::format("{}: empty node subset", what));
  if (static_cast<Index>(labels.size()) != n) {
    throw std::invalid_argument(fmt::format("{}: labels length mismatch", what));
  }
  for (int i : nodes) {
    if (i < 0 || i >= n) throw std::out_of_range(fmt::format("{}: node {} out of range", what, i));
  }
}

}  // namespace

ElboResult elbo(const Matrix& r, std::span<const int> nodes, std::span<const int> labels,
                int num_samples, RepParams& params, const Rng& rng, double grad_scale,
                Matrix* d_r) {
  check_nodes(nodes, labels, r.rows(), "elbo");
  if (num_samples < 1) throw std::invalid_argument("elbo: sample count must be >= 1");
  const Index ks = params.semantic_dim();
  const Index kv = params.variation_dim();
  const Index d = r.cols();
  const int num_classes = static_cast<int>(params.classifier.num_classes());
  const bool backward = grad_scale != 0.0;
  if (backward && d_r != nullptr) require_shape(*d_r, r.rows(), d, "elbo: d_r");

  const ParamGroup& sem = params.encoder.semantic;
  const ParamGroup& var = params.encoder.variation;
  const Matrix& dec_w = params.decoder.group[0].value;
  const Matrix& clf_w = params.classifier.group[0].value;
  const double log_sigma = params.decoder.log_sigma_r();
  const double inv_var_r = std::exp(-2.0 * log_sigma);
  const double s_count = static_cast<double>(num_samples);
  const double node_scale = grad_scale / static_cast<double>(nodes.size());

  ElboResult out;
  std::vector<Vector> eps_s(num_samples), eps_v(num_samples), s(num_samples),
      v(num_samples), z(num_samples), resid(num_samples), probs(num_samples);
  std::vector<double> log_py(num_samples), a(num_samples), log_ratio(num_samples),
      log_recon(num_samples);

  for (int node : nodes) {
    const int y = labels[node];
    if (y < 0 || y >= num_classes) throw std::out_of_range("elbo: label out of range");
    Matrix r_row = r.row(node);
    GaussianPosterior qs = encode(r_row, sem);
    GaussianPosterior qv = encode(r_row, var);
    Vector mu_s = qs.mean.row(0).transpose(), lv_s = qs.log_var.row(0).transpose();
    Vector mu_v = qv.mean.row(0).transpose(), lv_v = qv.log_var.row(0).transpose();
    Vector sd_s = (0.5 * lv_s.array()).exp(), sd_v = (0.5 * lv_v.array()).exp();
    Vector r_vec = r_row.row(0).transpose();
    const double log_q_const =
        -0.5 * static_cast<double>(ks + kv) * kLog2Pi - 0.5 * (lv_s.sum() + lv_v.sum());

    Rng node_rng = rng.split(static_cast<std::uint64_t>(node));
    for (int m = 0; m < num_samples; ++m) {
      eps_s[m].resize(ks);
      eps_v[m].resize(kv);
      for (Index i = 0; i < ks; ++i) eps_s[m](i) = node_rng.normal();
      for (Index i = 0; i < kv; ++i) eps_v[m](i) = node_rng.normal();
      s[m] = mu_s + sd_s.cwiseProduct(eps_s[m]);
      v[m] = mu_v + sd_v.cwiseProduct(eps_v[m]);
      z[m].resize(ks + kv);
      z[m] << s[m], v[m];

      Vector logits = classifier_logits(s[m], params.classifier);
      log_py[m] = log_softmax_at(logits, y, backward ? &probs[m] : nullptr);

      resid[m] = r_vec - decoder_mean(s[m], v[m], params.decoder);
      log_recon[m] = -0.5 * static_cast<double>(d) * kLog2Pi -
                     static_cast<double>(d) * log_sigma -
                     0.5 * resid[m].squaredNorm() * inv_var_r;
      const double log_q = log_q_const - 0.5 * (eps_s[m].squaredNorm() + eps_v[m].squaredNorm());
      log_ratio[m] = prior_log_density(z[m], params.prior) - log_q;
      a[m] = log_recon[m] + log_ratio[m];
    }

    const double lse = logsumexp(log_py);
    double t1 = lse - std::log(s_count);
    bool clamped = false;
    if (t1 < std::log(kMinLabelProb)) {
      t1 = std::log(kMinLabelProb);
      clamped = true;
      ++out.clamped;
    }
    std::vector<double> w(num_samples);
    double t2 = 0.0, t3 = 0.0, a_bar = 0.0;
    for (int m = 0; m < num_samples; ++m) {
      w[m] = std::exp(log_py[m] - lse);
      t2 += w[m] * log_recon[m];
      t3 += w[m] * log_ratio[m];
      a_bar += w[m] * a[m];
    }
    out.t1 += t1;
    out.t2 += t2;
    out.t3 += t3;
    if (!backward) continue;

    // Reverse pass for this node, everything pre-multiplied by node_scale.
    Vector d_mu_s = Vector::Zero(ks), d_lv_s = Vector::Zero(ks);
    Vector d_mu_v = Vector::Zero(kv), d_lv_v = Vector::Zero(kv);
    Vector d_r_vec = Vector::Zero(d);
    double d_log_sigma = 0.0;
    for (int m = 0; m < num_samples; ++m) {
      const double d_lpy = node_scale * w[m] * ((clamped ? 0.0 : 1.0) + a[m] - a_bar);
      const double d_a = node_scale * w[m];

      Vector d_z = Vector::Zero(ks + kv);
      // Reconstruction.
      Vector d_mu_r = d_a * inv_var_r * resid[m];
      params.decoder.group[0].grad.noalias() += z[m] * d_mu_r.transpose();
      params.decoder.group[1].grad.row(0) += d_mu_r.transpose();
      d_z += dec_w * d_mu_r;
      d_log_sigma += d_a * (-static_cast<double>(d) + resid[m].squaredNorm() * inv_var_r);
      d_r_vec -= d_mu_r;
      // Prior.
      d_z += d_a * prior_log_density_backward(z[m], params.prior, d_a);
      // Classifier.
      Vector onehot = Vector::Zero(num_classes);
      onehot(y) = 1.0;
      Vector d_logits = d_lpy * (onehot - probs[m]);
      params.classifier.group[0].grad.noalias() += s[m] * d_logits.transpose();
      params.classifier.group[1].grad.row(0) += d_logits.transpose();
      Vector d_s = d_z.head(ks) + clf_w * d_logits;
      Vector d_v = d_z.tail(kv);
      // Reparameterization; -log q contributes +1/2 per log-variance entry.
      d_mu_s += d_s;
      d_mu_v += d_v;
      d_lv_s += (0.5 * d_s.array() * sd_s.array() * eps_s[m].array()).matrix();
      d_lv_v += (0.5 * d_v.array() * sd_v.array() * eps_v[m].array()).matrix();
      d_lv_s.array() += 0.5 * d_a;
      d_lv_v.array() += 0.5 * d_a;
    }
    if (params.decoder.log_sigma_r() == params.decoder.raw_log_sigma_r()) {
      params.decoder.group[2].grad(0, 0) += d_log_sigma;
    }

    auto encoder_backward = [&](ParamGroup& head, const Vector& d_mu, Vector d_lv) {
      const Matrix& raw_lv_w = head[2].value;
      Vector raw_lv = raw_lv_w.transpose() * r_vec + head[3].value.row(0).transpose();
      for (Index i = 0; i < d_lv.size(); ++i) {
        if (raw_lv(i) < kLogVarMin || raw_lv(i) > kLogVarMax) d_lv(i) = 0.0;
      }
      head[0].grad.noalias() += r_vec * d_mu.transpose();
      head[1].grad.row(0) += d_mu.transpose();
      head[2].grad.noalias() += r_vec * d_lv.transpose();
      head[3].grad.row(0) += d_lv.transpose();
      d_r_vec += head[0].value * d_mu + raw_lv_w * d_lv;
    };
    encoder_backward(params.encoder.semantic, d_mu_s, d_lv_s);
    encoder_backward(params.encoder.variation, d_mu_v, d_lv_v);
    if (d_r != nullptr) d_r->row(node) += d_r_vec.transpose();
  }
  const double count = static_cast<double>(nodes.size());
  out.t1 /= count;
  out.t2 /= count;
  out.t3 /= count;
  return out;
}

std::vector<Prediction> predict(const Matrix& r, std::span<const int> nodes,
                                const RepParams& params, PredictMode mode,
                                int num_samples, const Rng& rng) {
  std::vector<Prediction> out;
  out.reserve(nodes.size());
  for (int node : nodes) {
    Matrix r_row = r.row(node);
    GaussianPosterior qs = encode(r_row, params.encoder.semantic);
    Vector mu = qs.mean.row(0).transpose();
    Vector probs;
    if (mode == PredictMode::kPosteriorMean) {
      probs = classify(mu, params.classifier);
    } else {
      if (num_samples < 1) throw std::invalid_argument("predict: sample count must be >= 1");
      Vector lv = qs.log_var.row(0).transpose();
      Rng node_rng = rng.split(static_cast<std::uint64_t>(node));
      probs = Vector::Zero(params.classifier.num_classes());
      for (int m = 0; m < num_samples; ++m) {
        probs += classify(reparam_sample(mu, lv, node_rng), params.classifier);
      }
      probs /= static_cast<double>(num_samples);
    }
    Prediction p;
    for (Index c = 0; c < probs.size(); ++c) {
      if (probs(c) > probs(p.label)) p.label = static_cast<int>(c);
    }
    p.confidence = probs(p.label);
    out.push_back(p);
  }
  return out;
}

double cross_entropy(const Matrix& r, std::span<const int> nodes, std::span<const int> labels,
                     ClassifierParams& head, double grad_scale, Matrix* d_r) {
  check_nodes(nodes, labels, r.rows(), "cross_entropy");
  const double node_scale = grad_scale / static_cast<double>(nodes.size());
  double total = 0.0;
  for (int node : nodes) {
    Vector x = r.row(node).transpose();
    Vector logits = classifier_logits(x, head);
    Vector probs;
    total -= log_softmax_at(logits, labels[node], &probs);
    if (grad_scale == 0.0) continue;
    Vector d_logits = probs;
    d_logits(labels[node]) -= 1.0;
    d_logits *= node_scale;
    head.group[0].grad.noalias() += x * d_logits.transpose();
    head.group[1].grad.row(0) += d_logits.transpose();
    if (d_r != nullptr) d_r->row(node) += (head.group[0].value * d_logits).transpose();
  }
  return total / static_cast<double>(nodes.size());
}

std::vector<Prediction> predict_head(const Matrix& r, std::span<const int> nodes,
                                     const ClassifierParams& head) {
  std::vector<Prediction> out;
  for (int node : nodes) {
    Vector probs = classify(r.row(node).transpose(), head);
    Prediction p;
    for (Index c = 0; c < probs.size(); ++c) {
      if (probs(c) > probs(p.label)) p.label = static_cast<int>(c);
    }
    p.confidence = probs(p.label);
    out.push_back(p);
  }
  return out;
}

}  // namespace mldgg
