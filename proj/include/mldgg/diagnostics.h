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

#ifndef MLDGG_DIAGNOSTICS_H_
#define MLDGG_DIAGNOSTICS_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mldgg/meta_learner.h"

namespace mldgg {

// -T * logsumexp(logits / T).
double energy_score(std::span<const double> logits, double temperature = 1.0);

/// Non-negative probabilities summing to one (within 1e-9).
class CategoricalDist {
 public:
  explicit CategoricalDist(std::vector<double> probs);
  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

/// Square root of the base-2 Jensen-Shannon divergence, in [0, 1].
double js_distance(const CategoricalDist& p, const CategoricalDist& q);

/// Fixed-width histograms of several samples over their pooled range, so the
/// resulting distributions share one support.
std::vector<CategoricalDist> pooled_histograms(
    const std::vector<std::vector<double>>& samples, int bins = 20);

/// Pairwise js_distance between histograms of the given samples.
Matrix js_matrix(const std::vector<std::vector<double>>& samples, int bins = 20);

/// Per-node logits: the classifier over the semantic posterior mean, or the
/// linear head over R in modes without the representation learner.
Matrix node_logits(const Graph& g, ModelParams& params, const TrainConfig& cfg, Rng rng);

std::vector<double> node_energies(const Graph& g, ModelParams& params,
                                  const TrainConfig& cfg, Rng rng,
                                  double temperature = 1.0);

/// Writes node_id,domain,label,r*,s*,v* with s and v the posterior means.
void export_embeddings(const Graph& g, ModelParams& params, const TrainConfig& cfg,
                       Rng rng, const std::filesystem::path& path);

// Nine significant digits, as used by every CSV writer.
std::string format_float(double x);

}  // namespace mldgg

#endif  // MLDGG_DIAGNOSTICS_H_
