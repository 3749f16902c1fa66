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

#ifndef MLDGG_META_LEARNER_H_
#define MLDGG_META_LEARNER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mldgg/gcn.h"
#include "mldgg/graph.h"
#include "mldgg/representation_learner.h"
#include "mldgg/structure_learner.h"

namespace mldgg {

enum class AblationMode { kFull, kNoSL, kNoRL, kNoMAML, kNoInnerSL, kNoInnerRL, kERM };
enum class MamlOrder { kFirst, kSecond };

std::string to_string(AblationMode mode);
AblationMode ablation_mode_from_string(const std::string& s);
const std::vector<AblationMode>& all_ablation_modes();
std::string to_string(MamlOrder order);
MamlOrder maml_order_from_string(const std::string& s);

struct TrainConfig {
  double inner_lr = 1e-3;  // l_in
  double outer_lr = 1e-1;  // l_out
  int inner_steps = 5;     // eta
  int tasks_per_step = 0;  // M; 0 means every source graph
  double reg_weight = 0.5;  // lambda_r
  double mix = 0.5;         // lambda, weight of the observed graph
  AblationMode mode = AblationMode::kFull;
  MamlOrder order = MamlOrder::kFirst;
  int elbo_samples = 1;  // S
  StructLearnerConfig structure;
  int epochs = 50;
  std::uint64_t seed = 0;

  double support_fraction = 0.3;
  int finetune_steps = 10;
  bool reset_task_gnn = false;  // re-initialize per-task GNNs every epoch

  int gnn_layers = 2;
  int hidden_dim = 16;
  int rep_dim = 16;  // d
  int semantic_dim = 8;
  int variation_dim = 8;
  PriorMode prior = PriorMode::kJoint;

  void validate() const;
  bool uses_structure() const;
  bool uses_rep_learner() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Per-task parameters that are never meta-updated: the GNN and, in modes
// without the representation learner, a linear classification head.
struct TaskParams {
  GnnParams gnn;
  ClassifierParams head;
};

struct MetaState {
  StructParams theta_t;
  RepParams theta_r;
  std::map<std::string, TaskParams> tasks;  // keyed by domain name
  TaskParams shared;  // ERM only
  Index input_dim = 0;
  int num_classes = 0;
  int epochs_done = 0;
};

TaskParams init_task_params(Index input_dim, int num_classes, const TrainConfig& cfg,
                            Rng rng);
MetaState init_meta_state(Index input_dim, int num_classes,
                          const std::vector<std::string>& domains,
                          const TrainConfig& cfg, Rng rng);

// Named view of every parameter group, in a stable order.
std::vector<std::pair<std::string, ParamGroup*>> named_groups(MetaState& state);

/// One full parameter set as seen by a single task.
struct ModelParams {
  StructParams structure;
  RepParams rep;
  GnnParams gnn;
  ClassifierParams head;

  // structure, rep..., gnn, head.
  std::vector<ParamGroup*> groups();
  void zero_grads();
};

/// Everything fixed for one task within an epoch: the normalized observed
/// graph, the support/query split and the structure samples drawn from the
/// structure learner before adaptation.
struct TaskContext {
  const Graph* graph = nullptr;
  Matrix a_hat;
  EpisodeSplit split;
  std::vector<StructSample> samples;
  Matrix a_prime_hat;  // mean of the normalized sampled adjacencies
  Rng rng{0};
};

TaskContext prepare_task(const Graph& g, const StructParams& theta_t,
                         const TrainConfig& cfg, Rng rng);

struct EpisodeLosses {
  double total = 0.0;
  double neg_elbo = 0.0;  // cross-entropy in modes without the rep learner
  double reg = 0.0;       // L_reg (unweighted)
};

/// L = -L_ELBO + lambda_r L_reg on `nodes`. When `with_grads`, the gradients
/// of L are accumulated into `params`.
EpisodeLosses task_loss(const TaskContext& ctx, std::span<const int> nodes,
                        ModelParams& params, const TrainConfig& cfg, const Rng& rng,
                        bool with_grads);

struct AdaptResult {
  ModelParams adapted;  // grads hold d L_qry / d theta' at the final iterate
  EpisodeLosses support;
  EpisodeLosses query;
};

/// Runs eta plain-gradient steps on the support loss from the meta
/// parameters and the task's persistent GNN, then evaluates the query loss.
/// The task's GNN (and head) is overwritten with the adapted copy.
AdaptResult inner_adapt(const TaskContext& ctx, const MetaState& meta, TaskParams& task,
                        const TrainConfig& cfg);

struct MetaStepResult {
  double support_loss = 0.0;
  double query_loss = 0.0;
  double query_neg_elbo = 0.0;
  double query_reg = 0.0;
};

/// Outer update from the mean query loss of `tasks` (domain name, context).
MetaStepResult meta_step(const std::vector<std::pair<std::string, TaskContext>>& tasks,
                         MetaState& meta, const TrainConfig& cfg);

/// Outer gradient for one task when differentiating through the inner
/// steps; exposed for verification. Returns gradients for
/// (theta_t, theta_r groups) flattened in ModelParams order.
std::vector<double> second_order_meta_gradient(const TaskContext& ctx,
                                               const MetaState& meta,
                                               const TaskParams& task,
                                               const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double support_loss = 0.0;
  double query_loss = 0.0;
  double query_neg_elbo = 0.0;
  double query_reg = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Meta-trains on `sources` (already feature-aligned) for cfg.epochs epochs
/// starting from `state`, continuing its epoch numbering.
std::vector<EpochMetrics> train(const std::vector<Graph>& sources, MetaState& state,
                                const TrainConfig& cfg,
                                const EpochCallback& on_epoch = nullptr);

/// Initializes and trains in one call.
MetaState train(const std::vector<Graph>& sources, const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  int correct = 0;
  int query_size = 0;
};

/// Fine-tunes from the meta state on the target support set for `steps`
/// gradient steps (fresh GNN), then scores the query set. ERM applies the
/// pooled-source model directly.
EvalResult fine_tune_and_eval(const MetaState& meta, const Graph& target, int steps,
                              const TrainConfig& cfg, Rng rng);

/// Node representations and the fitted parameters used to compute them.
Matrix representations(const Graph& g, ModelParams& params, const TrainConfig& cfg,
                       Rng rng);

void save_checkpoint(MetaState& state, const nlohmann::json& run_config,
                     const std::filesystem::path& path);

/// Restores parameters into `state`, which must already have the expected
/// shapes (for example from init_meta_state). Throws on missing names or
/// shape mismatches. Returns the stored run config.
nlohmann::json load_checkpoint(const std::filesystem::path& path, MetaState& state);

}  // namespace mldgg

#endif  // MLDGG_META_LEARNER_H_
