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

#include "mldgg/diagnostics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "mldgg/numeric.h"

namespace mldgg {

double energy_score(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("energy_score: temperature must be > 0");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& x : scaled) x /= temperature;
  return -temperature * logsumexp(scaled);
}

CategoricalDist::CategoricalDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("CategoricalDist: empty support");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("CategoricalDist: negative or non-finite probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(
        fmt::format("CategoricalDist: probabilities sum to {}, not 1", total));
  }
}

double js_distance(const CategoricalDist& p, const CategoricalDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument(fmt::format("js_distance: support size mismatch ({} vs {})",
                                            p.size(), q.size()));
  }
  auto kl_to_mid = [](double a, double m) { return a > 0.0 ? a * std::log2(a / m) : 0.0; };
  double div = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p.probs()[i];
    const double b = q.probs()[i];
    const double m = 0.5 * (a + b);
    div += 0.5 * kl_to_mid(a, m) + 0.5 * kl_to_mid(b, m);
  }
  return std::sqrt(std::clamp(div, 0.0, 1.0));
}

std::vector<CategoricalDist> pooled_histograms(
    const std::vector<std::vector<double>>& samples, int bins) {
  if (bins < 1) throw std::invalid_argument("pooled_histograms: bins must be >= 1");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : samples) {
    if (s.empty()) throw std::invalid_argument("pooled_histograms: empty sample");
    for (double x : s) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  const double width = (hi - lo) / bins;
  std::vector<CategoricalDist> out;
  for (const auto& s : samples) {
    std::vector<double> counts(bins, 0.0);
    for (double x : s) {
      int b = width > 0.0 ? static_cast<int>((x - lo) / width) : 0;
      counts[std::clamp(b, 0, bins - 1)] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(s.size());
    out.emplace_back(std::move(counts));
  }
  return out;
}

Matrix js_matrix(const std::vector<std::vector<double>>& samples, int bins) {
  auto hists = pooled_histograms(samples, bins);
  const Index k = static_cast<Index>(hists.size());
  Matrix out = Matrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      out(i, j) = out(j, i) = js_distance(hists[i], hists[j]);
    }
  }
  return out;
}

Matrix node_logits(const Graph& g, ModelParams& params, const TrainConfig& cfg, Rng rng) {
  Matrix r = representations(g, params, cfg, rng);
  if (!cfg.uses_rep_learner()) {
    Matrix logits = r * params.head.group[0].value;
    logits.rowwise() += params.head.group[1].value.row(0);
    return logits;
  }
  GaussianPosterior q = encode(r, params.rep.encoder.semantic);
  Matrix logits(g.num_nodes, params.rep.classifier.num_classes());
  for (Index i = 0; i < g.num_nodes; ++i) {
    logits.row(i) = classifier_logits(q.mean.row(i).transpose(), params.rep.classifier);
  }
  return logits;
}

std::vector<double> node_energies(const Graph& g, ModelParams& params,
                                  const TrainConfig& cfg, Rng rng, double temperature) {
  Matrix logits = node_logits(g, params, cfg, rng);
  std::vector<double> out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    out[i] = energy_score(std::span<const double>(logits.row(i).data(), logits.cols()),
                          temperature);
  }
  return out;
}

std::string format_float(double x) { return fmt::format("{:.9g}", x); }

void export_embeddings(const Graph& g, ModelParams& params, const TrainConfig& cfg,
                       Rng rng, const std::filesystem::path& path) {
  Matrix r = representations(g, params, cfg, rng);
  auto [qs, qv] = encode(r, params.rep.encoder);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  std::string header = "node_id,domain,label";
  for (Index j = 0; j < r.cols(); ++j) header += fmt::format(",r{}", j);
  for (Index j = 0; j < qs.mean.cols(); ++j) header += fmt::format(",s{}", j);
  for (Index j = 0; j < qv.mean.cols(); ++j) header += fmt::format(",v{}", j);
  f << header << '\n';
  for (Index i = 0; i < g.num_nodes; ++i) {
    std::string row = fmt::format("{},{},{}", i, g.domain, g.labels[i]);
    for (const Matrix* m : {&r, &qs.mean, &qv.mean}) {
      for (Index j = 0; j < m->cols(); ++j) row += "," + format_float((*m)(i, j));
    }
    f << row << '\n';
  }
  if (!f) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

}  // namespace mldgg
