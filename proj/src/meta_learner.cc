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

#include "mldgg/meta_learner.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace mldgg {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x7472;  // "tr"
constexpr std::uint64_t kInitStream = 0x696e;   // "in"

const std::vector<std::pair<AblationMode, const char*>> kModeNames = {
    {AblationMode::kFull, "Full"},           {AblationMode::kNoSL, "NoSL"},
    {AblationMode::kNoRL, "NoRL"},           {AblationMode::kNoMAML, "NoMAML"},
    {AblationMode::kNoInnerSL, "NoInnerSL"}, {AblationMode::kNoInnerRL, "NoInnerRL"},
    {AblationMode::kERM, "ERM"},
};

std::vector<int> all_nodes(const Graph& g) {
  std::vector<int> nodes(g.num_nodes);
  std::iota(nodes.begin(), nodes.end(), 0);
  return nodes;
}

bool inner_updates_structure(const TrainConfig& cfg) {
  return cfg.uses_structure() && cfg.mode != AblationMode::kNoInnerSL;
}

bool inner_updates_rep(const TrainConfig& cfg) {
  return cfg.uses_rep_learner() && cfg.mode != AblationMode::kNoInnerRL;
}

// Which of the ModelParams groups an inner step moves.
std::vector<bool> inner_mask(const TrainConfig& cfg, std::size_t num_groups) {
  std::vector<bool> mask(num_groups, true);
  mask[0] = inner_updates_structure(cfg);
  for (std::size_t g = 1; g + 2 < num_groups; ++g) mask[g] = inner_updates_rep(cfg);
  return mask;
}

void masked_sgd(ModelParams& p, const std::vector<bool>& mask, double lr) {
  auto groups = p.groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (mask[g]) groups[g]->sgd_step(lr);
  }
}

void require_finite(const EpisodeLosses& l, const char* phase, int step) {
  if (!std::isfinite(l.total)) {
    throw std::runtime_error(
        fmt::format("divergent loss in {} at step {} (loss = {})", phase, step, l.total));
  }
}

ModelParams task_model(const MetaState& meta, const TaskParams& task) {
  return ModelParams{meta.theta_t, meta.theta_r, task.gnn, task.head};
}

std::vector<double> flat_values(ModelParams& p) {
  std::vector<double> out;
  for (ParamGroup* g : p.groups()) {
    auto v = g->flat_values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<double> flat_grads(ModelParams& p) {
  std::vector<double> out;
  for (ParamGroup* g : p.groups()) {
    auto v = g->flat_grads();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void set_flat_values(ModelParams& p, std::span<const double> flat) {
  std::size_t offset = 0;
  for (ParamGroup* g : p.groups()) {
    std::size_t n = g->num_values();
    g->set_flat_values(flat.subspan(offset, n));
    offset += n;
  }
}

std::size_t meta_value_count(ModelParams& p) {
  auto groups = p.groups();
  std::size_t n = 0;
  for (std::size_t g = 0; g + 2 < groups.size(); ++g) n += groups[g]->num_values();
  return n;
}

json group_to_json(const ParamGroup& g) {
  json out = json::object();
  for (const auto& p : g) {
    out[p.name] = {{"shape", {p.value.rows(), p.value.cols()}},
                   {"values", std::vector<double>(p.value.data(),
                                                  p.value.data() + p.value.size())}};
  }
  return out;
}

}  // namespace

std::string to_string(AblationMode mode) {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "?";
}

AblationMode ablation_mode_from_string(const std::string& s) {
  for (const auto& [m, name] : kModeNames) {
    if (s == name) return m;
  }
  throw std::invalid_argument(fmt::format("mode: unknown ablation mode '{}'", s));
}

const std::vector<AblationMode>& all_ablation_modes() {
  static const std::vector<AblationMode> modes = [] {
    std::vector<AblationMode> out;
    for (const auto& entry : kModeNames) out.push_back(entry.first);
    return out;
  }();
  return modes;
}

std::string to_string(MamlOrder order) {
  return order == MamlOrder::kFirst ? "first" : "second";
}

MamlOrder maml_order_from_string(const std::string& s) {
  if (s == "first") return MamlOrder::kFirst;
  if (s == "second") return MamlOrder::kSecond;
  throw std::invalid_argument(fmt::format("maml_order: unknown order '{}'", s));
}

void TrainConfig::validate() const {
  if (!(inner_lr > 0.0)) throw std::invalid_argument("inner_lr: must be > 0");
  if (!(outer_lr > 0.0)) throw std::invalid_argument("outer_lr: must be > 0");
  if (inner_steps < 0) throw std::invalid_argument("inner_steps: must be >= 0");
  if (tasks_per_step < 0) throw std::invalid_argument("tasks_per_step: must be >= 0");
  if (!(mix >= 0.0 && mix <= 1.0)) throw std::invalid_argument("mix: must be in [0,1]");
  if (!(reg_weight >= 0.0 && reg_weight <= 1.0)) {
    throw std::invalid_argument("reg_weight: must be in [0,1]");
  }
  if (elbo_samples < 1) throw std::invalid_argument("elbo_samples: must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs: must be >= 0");
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("support_fraction: must be in (0,1)");
  }
  if (finetune_steps < 0) throw std::invalid_argument("finetune_steps: must be >= 0");
  if (gnn_layers < 1) throw std::invalid_argument("gnn_layers: must be >= 1");
  if (hidden_dim < 1 || rep_dim < 1 || semantic_dim < 1 || variation_dim < 1) {
    throw std::invalid_argument("layer widths must be >= 1");
  }
  structure.validate();
}

bool TrainConfig::uses_structure() const {
  return mode != AblationMode::kNoSL && mode != AblationMode::kERM;
}

bool TrainConfig::uses_rep_learner() const {
  return mode != AblationMode::kNoRL && mode != AblationMode::kERM;
}

json to_json(const TrainConfig& cfg) {
  return json{
      {"inner_lr", cfg.inner_lr},
      {"outer_lr", cfg.outer_lr},
      {"inner_steps", cfg.inner_steps},
      {"tasks_per_step", cfg.tasks_per_step},
      {"reg_weight", cfg.reg_weight},
      {"mix", cfg.mix},
      {"mode", to_string(cfg.mode)},
      {"maml_order", to_string(cfg.order)},
      {"elbo_samples", cfg.elbo_samples},
      {"num_structure_samples", cfg.structure.num_samples},
      {"alpha", cfg.structure.alpha},
      {"beta", cfg.structure.beta},
      {"num_pivots", cfg.structure.num_pivots},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"support_fraction", cfg.support_fraction},
      {"finetune_steps", cfg.finetune_steps},
      {"reset_task_gnn", cfg.reset_task_gnn},
      {"gnn_layers", cfg.gnn_layers},
      {"hidden_dim", cfg.hidden_dim},
      {"rep_dim", cfg.rep_dim},
      {"semantic_dim", cfg.semantic_dim},
      {"variation_dim", cfg.variation_dim},
      {"prior", to_string(cfg.prior)},
  };
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train: expected an object");
  TrainConfig cfg;
  const json defaults = to_json(cfg);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) {
      throw std::invalid_argument(fmt::format("train.{}: unknown field", it.key()));
    }
  }
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const json::exception&) {
      throw std::invalid_argument(fmt::format("train.{}: wrong type", key));
    }
  };
  get("inner_lr", cfg.inner_lr);
  get("outer_lr", cfg.outer_lr);
  get("inner_steps", cfg.inner_steps);
  get("tasks_per_step", cfg.tasks_per_step);
  get("reg_weight", cfg.reg_weight);
  get("mix", cfg.mix);
  std::string s;
  if (j.contains("mode")) {
    get("mode", s);
    cfg.mode = ablation_mode_from_string(s);
  }
  if (j.contains("maml_order")) {
    get("maml_order", s);
    cfg.order = maml_order_from_string(s);
  }
  if (j.contains("prior")) {
    get("prior", s);
    cfg.prior = prior_mode_from_string(s);
  }
  get("elbo_samples", cfg.elbo_samples);
  get("num_structure_samples", cfg.structure.num_samples);
  get("alpha", cfg.structure.alpha);
  get("beta", cfg.structure.beta);
  get("num_pivots", cfg.structure.num_pivots);
  get("epochs", cfg.epochs);
  get("seed", cfg.seed);
  get("support_fraction", cfg.support_fraction);
  get("finetune_steps", cfg.finetune_steps);
  get("reset_task_gnn", cfg.reset_task_gnn);
  get("gnn_layers", cfg.gnn_layers);
  get("hidden_dim", cfg.hidden_dim);
  get("rep_dim", cfg.rep_dim);
  get("semantic_dim", cfg.semantic_dim);
  get("variation_dim", cfg.variation_dim);
  cfg.validate();
  return cfg;
}

TaskParams init_task_params(Index input_dim, int num_classes, const TrainConfig& cfg,
                            Rng rng) {
  std::vector<Index> dims = {input_dim};
  for (int l = 1; l < cfg.gnn_layers; ++l) dims.push_back(cfg.hidden_dim);
  dims.push_back(cfg.rep_dim);
  Rng gnn_rng = rng.split(1);
  Rng head_rng = rng.split(2);
  return TaskParams{GnnParams::init(dims, gnn_rng),
                    ClassifierParams::init(cfg.rep_dim, num_classes, head_rng)};
}

MetaState init_meta_state(Index input_dim, int num_classes,
                          const std::vector<std::string>& domains,
                          const TrainConfig& cfg, Rng rng) {
  cfg.validate();
  MetaState state;
  state.input_dim = input_dim;
  state.num_classes = num_classes;
  Rng base = rng.split(kInitStream);
  Rng struct_rng = base.split(1);
  Rng rep_rng = base.split(2);
  state.theta_t = StructParams::init(input_dim, cfg.structure.num_pivots, struct_rng);
  RepConfig rep_cfg{cfg.rep_dim, cfg.semantic_dim, cfg.variation_dim, num_classes,
                    cfg.prior};
  state.theta_r = RepParams::init(rep_cfg, rep_rng);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (state.tasks.count(domains[i])) {
      throw std::invalid_argument(fmt::format("duplicate source domain '{}'", domains[i]));
    }
    state.tasks.emplace(domains[i],
                        init_task_params(input_dim, num_classes, cfg, base.split(100 + i)));
  }
  state.shared = init_task_params(input_dim, num_classes, cfg, base.split(3));
  return state;
}

std::vector<std::pair<std::string, ParamGroup*>> named_groups(MetaState& state) {
  std::vector<std::pair<std::string, ParamGroup*>> out = {
      {"theta_t", &state.theta_t.group},
      {"theta_r.semantic", &state.theta_r.encoder.semantic},
      {"theta_r.variation", &state.theta_r.encoder.variation},
      {"theta_r.decoder", &state.theta_r.decoder.group},
      {"theta_r.prior", &state.theta_r.prior.group},
      {"theta_r.classifier", &state.theta_r.classifier.group},
  };
  for (auto& [name, task] : state.tasks) {
    out.emplace_back("task." + name + ".gnn", &task.gnn.group);
    out.emplace_back("task." + name + ".head", &task.head.group);
  }
  out.emplace_back("shared.gnn", &state.shared.gnn.group);
  out.emplace_back("shared.head", &state.shared.head.group);
  return out;
}

std::vector<ParamGroup*> ModelParams::groups() {
  std::vector<ParamGroup*> out = {&structure.group};
  for (ParamGroup* g : rep.groups()) out.push_back(g);
  out.push_back(&gnn.group);
  out.push_back(&head.group);
  return out;
}

void ModelParams::zero_grads() {
  for (ParamGroup* g : groups()) g->zero_grads();
}

TaskContext prepare_task(const Graph& g, const StructParams& theta_t,
                         const TrainConfig& cfg, Rng rng) {
  TaskContext ctx;
  ctx.graph = &g;
  ctx.rng = rng;
  ctx.a_hat = normalize_adjacency(g);
  ctx.split = split_episode(g, cfg.support_fraction, rng.split(1));
  if (cfg.uses_structure()) {
    Matrix probs = edge_probs(g.features, theta_t);
    Rng sample_rng = rng.split(2);
    ctx.samples = sample_structures(probs, cfg.structure.num_samples, sample_rng);
    ctx.a_prime_hat = Matrix::Zero(g.num_nodes, g.num_nodes);
    for (auto& s : ctx.samples) {
      s.reward = structure_reward(s.adjacency, g.features, cfg.structure);
      ctx.a_prime_hat += normalize_adjacency(s.adjacency);
    }
    ctx.a_prime_hat /= static_cast<double>(ctx.samples.size());
  } else {
    ctx.a_prime_hat = ctx.a_hat;
  }
  return ctx;
}

EpisodeLosses task_loss(const TaskContext& ctx, std::span<const int> nodes,
                        ModelParams& params, const TrainConfig& cfg, const Rng& rng,
                        bool with_grads) {
  if (nodes.empty()) throw std::invalid_argument("task_loss: empty node subset");
  const Graph& g = *ctx.graph;
  const bool structure = cfg.uses_structure();
  const double lambda = structure ? cfg.mix : 1.0;

  GcnCache cache;
  Matrix r = gcn_forward(g.features, ctx.a_hat, ctx.a_prime_hat, params.gnn, lambda,
                         with_grads ? &cache : nullptr);
  Matrix d_r;
  if (with_grads) d_r = Matrix::Zero(r.rows(), r.cols());

  EpisodeLosses out;
  if (cfg.uses_rep_learner()) {
    ElboResult e = elbo(r, nodes, g.labels, cfg.elbo_samples, params.rep, rng,
                        with_grads ? -1.0 : 0.0, with_grads ? &d_r : nullptr);
    out.neg_elbo = -e.value();
  } else {
    out.neg_elbo = cross_entropy(r, nodes, g.labels, params.head, with_grads ? 1.0 : 0.0,
                                 with_grads ? &d_r : nullptr);
  }
  if (structure) {
    out.reg = reinforce_loss_and_grad(ctx.samples, g.features, params.structure,
                                      with_grads ? cfg.reg_weight : 0.0);
  }
  out.total = out.neg_elbo + cfg.reg_weight * out.reg;
  if (with_grads) gcn_backward(cache, d_r, params.gnn);
  return out;
}

AdaptResult inner_adapt(const TaskContext& ctx, const MetaState& meta, TaskParams& task,
                        const TrainConfig& cfg) {
  AdaptResult res{task_model(meta, task), {}, {}};
  ModelParams& p = res.adapted;
  const auto mask = inner_mask(cfg, p.groups().size());
  const auto& support = ctx.split.support;
  for (int step = 0; step < cfg.inner_steps; ++step) {
    p.zero_grads();
    EpisodeLosses l = task_loss(ctx, support, p, cfg, ctx.rng.split(100 + step), true);
    require_finite(l, "inner loop", step);
    if (step == 0) res.support = l;
    masked_sgd(p, mask, cfg.inner_lr);
  }
  if (cfg.inner_steps == 0) {
    res.support = task_loss(ctx, support, p, cfg, ctx.rng.split(100), false);
  }
  p.zero_grads();
  res.query = task_loss(ctx, ctx.split.query, p, cfg, ctx.rng.split(99), true);
  require_finite(res.query, "query evaluation", cfg.inner_steps);
  task.gnn = p.gnn;
  task.head = p.head;
  return res;
}

std::vector<double> second_order_meta_gradient(const TaskContext& ctx,
                                               const MetaState& meta,
                                               const TaskParams& task,
                                               const TrainConfig& cfg) {
  ModelParams p = task_model(meta, task);
  const auto groups = p.groups();
  const auto mask_groups = inner_mask(cfg, groups.size());
  std::vector<bool> mask;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    mask.insert(mask.end(), groups[g]->num_values(), mask_groups[g]);
  }

  auto gradient_at = [&](std::span<const double> x, std::span<const int> nodes,
                         const Rng& rng) {
    set_flat_values(p, x);
    p.zero_grads();
    task_loss(ctx, nodes, p, cfg, rng, true);
    return flat_grads(p);
  };

  // Forward through the inner loop, keeping every iterate.
  std::vector<std::vector<double>> iterates = {flat_values(p)};
  for (int step = 0; step < cfg.inner_steps; ++step) {
    std::vector<double> x = iterates.back();
    auto g = gradient_at(x, ctx.split.support, ctx.rng.split(100 + step));
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (mask[i]) x[i] -= cfg.inner_lr * g[i];
    }
    iterates.push_back(std::move(x));
  }
  std::vector<double> adj = gradient_at(iterates.back(), ctx.split.query, ctx.rng.split(99));

  // Reverse: adj <- (I - l_in M H_k)^T adj, Hessian-vector products by
  // central differences of the analytic gradient.
  for (int step = cfg.inner_steps - 1; step >= 0; --step) {
    std::vector<double> v(adj.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
      v[i] = mask[i] ? adj[i] : 0.0;
      norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double h = 1e-5 / norm;
    const auto& x = iterates[step];
    std::vector<double> up(x), down(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      up[i] += h * v[i];
      down[i] -= h * v[i];
    }
    const Rng step_rng = ctx.rng.split(100 + step);
    auto g_up = gradient_at(up, ctx.split.support, step_rng);
    auto g_down = gradient_at(down, ctx.split.support, step_rng);
    for (std::size_t i = 0; i < adj.size(); ++i) {
      adj[i] -= cfg.inner_lr * (g_up[i] - g_down[i]) / (2.0 * h);
    }
  }
  adj.resize(meta_value_count(p));
  return adj;
}

MetaStepResult meta_step(const std::vector<std::pair<std::string, TaskContext>>& tasks,
                         MetaState& meta, const TrainConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("meta_step: no tasks");
  const double inv_m = 1.0 / static_cast<double>(tasks.size());
  ModelParams accum = task_model(meta, meta.shared);
  accum.zero_grads();
  MetaStepResult out;
  const std::size_t meta_count = meta_value_count(accum);
  std::vector<double> outer(meta_count, 0.0);

  for (const auto& [name, ctx] : tasks) {
    auto it = meta.tasks.find(name);
    if (it == meta.tasks.end()) {
      throw std::invalid_argument(fmt::format("meta_step: unknown task '{}'", name));
    }
    std::vector<double> task_grad;
    if (cfg.order == MamlOrder::kSecond) {
      task_grad = second_order_meta_gradient(ctx, meta, it->second, cfg);
    }
    AdaptResult res = inner_adapt(ctx, meta, it->second, cfg);
    if (cfg.order == MamlOrder::kFirst) {
      task_grad = flat_grads(res.adapted);
      task_grad.resize(meta_count);
    }
    for (std::size_t i = 0; i < meta_count; ++i) outer[i] += inv_m * task_grad[i];
    out.support_loss += inv_m * res.support.total;
    out.query_loss += inv_m * res.query.total;
    out.query_neg_elbo += inv_m * res.query.neg_elbo;
    out.query_reg += inv_m * res.query.reg;
  }

  // Outer step on theta_t and theta_r only.
  ModelParams& target = accum;
  auto groups = target.groups();
  std::size_t offset = 0;
  for (std::size_t g = 0; g + 2 < groups.size(); ++g) {
    std::size_t n = groups[g]->num_values();
    groups[g]->add_flat_grads(std::span<const double>(outer).subspan(offset, n));
    offset += n;
  }
  if (cfg.uses_structure()) {
    meta.theta_t.group = target.structure.group;
    meta.theta_t.group.sgd_step(cfg.outer_lr);
  }
  if (cfg.uses_rep_learner()) {
    auto src = target.rep.groups();
    auto dst = meta.theta_r.groups();
    for (std::size_t g = 0; g < dst.size(); ++g) {
      *dst[g] = *src[g];
      dst[g]->sgd_step(cfg.outer_lr);
    }
  }
  return out;
}

namespace {

EpochMetrics erm_epoch(const std::vector<Graph>& sources,
                       const std::vector<Matrix>& a_hats, MetaState& state,
                       const TrainConfig& cfg) {
  EpochMetrics m;
  const int steps = std::max(1, cfg.inner_steps);
  const double inv_k = 1.0 / static_cast<double>(sources.size());
  TaskParams& model = state.shared;
  for (int step = 0; step < steps; ++step) {
    model.gnn.group.zero_grads();
    model.head.group.zero_grads();
    double pooled = 0.0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const Graph& g = sources[i];
      GcnCache cache;
      Matrix r = gcn_forward(g.features, a_hats[i], a_hats[i], model.gnn, 1.0, &cache);
      Matrix d_r = Matrix::Zero(r.rows(), r.cols());
      auto nodes = all_nodes(g);
      pooled += inv_k * cross_entropy(r, nodes, g.labels, model.head, inv_k, &d_r);
      gcn_backward(cache, d_r, model.gnn);
    }
    if (!std::isfinite(pooled)) {
      throw std::runtime_error(fmt::format("divergent ERM loss at step {}", step));
    }
    if (step == 0) m.support_loss = pooled;
    m.query_loss = pooled;
    m.query_neg_elbo = pooled;
    model.gnn.group.sgd_step(cfg.outer_lr);
    model.head.group.sgd_step(cfg.outer_lr);
  }
  return m;
}

EpochMetrics no_maml_epoch(const std::vector<Graph>& sources, MetaState& state,
                           const TrainConfig& cfg, const Rng& epoch_rng) {
  EpochMetrics m;
  const double inv_k = 1.0 / static_cast<double>(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Graph& g = sources[i];
    TaskParams& task = state.tasks.at(g.domain);
    TaskContext ctx = prepare_task(g, state.theta_t, cfg, epoch_rng.split(i));
    ModelParams p = task_model(state, task);
    const auto mask = std::vector<bool>(p.groups().size(), true);
    auto nodes = all_nodes(g);
    for (int step = 0; step < cfg.inner_steps; ++step) {
      p.zero_grads();
      EpisodeLosses l = task_loss(ctx, nodes, p, cfg, ctx.rng.split(100 + step), true);
      require_finite(l, "independent training", step);
      if (step == 0) m.support_loss += inv_k * l.total;
      masked_sgd(p, mask, cfg.inner_lr);
    }
    EpisodeLosses final_loss = task_loss(ctx, nodes, p, cfg, ctx.rng.split(99), false);
    m.query_loss += inv_k * final_loss.total;
    m.query_neg_elbo += inv_k * final_loss.neg_elbo;
    m.query_reg += inv_k * final_loss.reg;
    task.gnn = p.gnn;
    task.head = p.head;
  }
  return m;
}

}  // namespace

std::vector<EpochMetrics> train(const std::vector<Graph>& sources, MetaState& state,
                                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (sources.empty()) throw std::invalid_argument("train: no source graphs");
  for (const auto& g : sources) {
    if (g.feature_dim() != state.input_dim) {
      throw std::invalid_argument(fmt::format(
          "train: graph '{}' has feature dim {}, model expects {}", g.domain,
          g.feature_dim(), state.input_dim));
    }
    if (!state.tasks.count(g.domain)) {
      throw std::invalid_argument(
          fmt::format("train: no task parameters for domain '{}'", g.domain));
    }
  }
  std::vector<Matrix> a_hats;
  if (cfg.mode == AblationMode::kERM) {
    for (const auto& g : sources) a_hats.push_back(normalize_adjacency(g));
  }

  const Rng root = Rng(cfg.seed).split(kTrainStream);
  std::vector<EpochMetrics> history;
  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = state.epochs_done;
    const Rng epoch_rng = root.split(static_cast<std::uint64_t>(epoch));
    if (cfg.reset_task_gnn) {
      std::size_t i = 0;
      for (auto& [name, task] : state.tasks) {
        task = init_task_params(state.input_dim, state.num_classes, cfg,
                                epoch_rng.split(5000 + i++));
      }
    }
    EpochMetrics m;
    if (cfg.mode == AblationMode::kERM) {
      m = erm_epoch(sources, a_hats, state, cfg);
    } else if (cfg.mode == AblationMode::kNoMAML) {
      m = no_maml_epoch(sources, state, cfg, epoch_rng);
    } else {
      std::vector<std::size_t> chosen(sources.size());
      std::iota(chosen.begin(), chosen.end(), 0);
      if (cfg.tasks_per_step > 0 &&
          static_cast<std::size_t>(cfg.tasks_per_step) < sources.size()) {
        Rng pick = epoch_rng.split(7000);
        pick.shuffle(std::span<std::size_t>(chosen));
        chosen.resize(cfg.tasks_per_step);
        std::sort(chosen.begin(), chosen.end());
      }
      std::vector<std::pair<std::string, TaskContext>> tasks;
      for (std::size_t i : chosen) {
        tasks.emplace_back(sources[i].domain,
                           prepare_task(sources[i], state.theta_t, cfg, epoch_rng.split(i)));
      }
      MetaStepResult r = meta_step(tasks, state, cfg);
      m.support_loss = r.support_loss;
      m.query_loss = r.query_loss;
      m.query_neg_elbo = r.query_neg_elbo;
      m.query_reg = r.query_reg;
    }
    m.epoch = epoch;
    ++state.epochs_done;
    spdlog::debug("epoch {} mode {} support {:.6f} query {:.6f}", epoch,
                  to_string(cfg.mode), m.support_loss, m.query_loss);
    if (on_epoch) on_epoch(m);
    history.push_back(m);
  }
  return history;
}

MetaState train(const std::vector<Graph>& sources, const TrainConfig& cfg) {
  if (sources.empty()) throw std::invalid_argument("train: no source graphs");
  std::vector<std::string> names;
  int classes = 0;
  for (const auto& g : sources) {
    names.push_back(g.domain);
    classes = std::max(classes, g.num_classes);
  }
  MetaState state =
      init_meta_state(sources.front().feature_dim(), classes, names, cfg, Rng(cfg.seed));
  train(sources, state, cfg);
  return state;
}

EvalResult fine_tune_and_eval(const MetaState& meta, const Graph& target, int steps,
                              const TrainConfig& cfg, Rng rng) {
  if (steps < 0) throw std::invalid_argument("fine_tune_and_eval: steps must be >= 0");
  if (target.feature_dim() != meta.input_dim) {
    throw std::invalid_argument(fmt::format(
        "fine_tune_and_eval: target feature dim {} does not match model dim {}",
        target.feature_dim(), meta.input_dim));
  }
  if (target.num_classes > meta.num_classes) {
    throw std::invalid_argument("fine_tune_and_eval: target has more classes than the model");
  }
  EvalResult out;
  std::vector<Prediction> preds;
  const EpisodeSplit split = split_episode(target, cfg.support_fraction, rng.split(1).split(1));
  if (cfg.mode == AblationMode::kERM) {
    Matrix a_hat = normalize_adjacency(target);
    Matrix r = gcn_forward(target.features, a_hat, a_hat, meta.shared.gnn, 1.0);
    preds = predict_head(r, split.query, meta.shared.head);
  } else {
    ModelParams p = task_model(
        meta, init_task_params(meta.input_dim, meta.num_classes, cfg, rng.split(2)));
    TaskContext ctx = prepare_task(target, p.structure, cfg, rng.split(1));
    std::vector<bool> mask(p.groups().size(), true);
    mask[0] = cfg.uses_structure();
    for (int step = 0; step < steps; ++step) {
      p.zero_grads();
      EpisodeLosses l =
          task_loss(ctx, ctx.split.support, p, cfg, ctx.rng.split(100 + step), true);
      require_finite(l, "fine-tuning", step);
      masked_sgd(p, mask, cfg.inner_lr);
    }
    const double lambda = cfg.uses_structure() ? cfg.mix : 1.0;
    Matrix r = gcn_forward(target.features, ctx.a_hat, ctx.a_prime_hat, p.gnn, lambda);
    preds = cfg.uses_rep_learner() ? predict(r, ctx.split.query, p.rep)
                                   : predict_head(r, ctx.split.query, p.head);
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].label == target.labels[split.query[i]]) ++out.correct;
  }
  out.query_size = static_cast<int>(split.query.size());
  out.accuracy = out.query_size == 0 ? 0.0
                                     : static_cast<double>(out.correct) / out.query_size;
  return out;
}

Matrix representations(const Graph& g, ModelParams& params, const TrainConfig& cfg,
                       Rng rng) {
  TaskContext ctx = prepare_task(g, params.structure, cfg, rng);
  const double lambda = cfg.uses_structure() ? cfg.mix : 1.0;
  return gcn_forward(g.features, ctx.a_hat, ctx.a_prime_hat, params.gnn, lambda);
}

void save_checkpoint(MetaState& state, const json& run_config,
                     const std::filesystem::path& path) {
  json params = json::object();
  for (auto& [prefix, group] : named_groups(state)) {
    const json entries = group_to_json(*group);
    for (auto it = entries.begin(); it != entries.end(); ++it) {
      params[prefix + "." + it.key()] = it.value();
    }
  }
  json out = {
      {"format", "mldgg-checkpoint-v1"},
      {"config", run_config},
      {"epochs_done", state.epochs_done},
      {"input_dim", state.input_dim},
      {"num_classes", state.num_classes},
      {"prior", to_string(state.theta_r.prior.mode)},
      {"params", std::move(params)},
  };
  std::ofstream f(path);
  if (!f) throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  f << out.dump() << '\n';
}

json load_checkpoint(const std::filesystem::path& path, MetaState& state) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(fmt::format("malformed checkpoint: {}", e.what()));
  }
  if (j.value("format", "") != "mldgg-checkpoint-v1") {
    throw std::invalid_argument("checkpoint: unrecognized format");
  }
  if (j.at("input_dim").get<Index>() != state.input_dim ||
      j.at("num_classes").get<int>() != state.num_classes) {
    throw std::invalid_argument(fmt::format(
        "checkpoint: shape mismatch (checkpoint input_dim {} classes {}, model {} / {})",
        j.at("input_dim").get<Index>(), j.at("num_classes").get<int>(), state.input_dim,
        state.num_classes));
  }
  const json& params = j.at("params");
  std::set<std::string> consumed;
  for (auto& [prefix, group] : named_groups(state)) {
    for (auto& p : *group) {
      const std::string key = prefix + "." + p.name;
      auto it = params.find(key);
      if (it == params.end()) {
        throw std::invalid_argument(fmt::format("checkpoint: missing parameter {}", key));
      }
      auto shape = it->at("shape").get<std::vector<Index>>();
      auto values = it->at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols() ||
          static_cast<Index>(values.size()) != p.value.size()) {
        throw std::invalid_argument(fmt::format(
            "checkpoint: shape mismatch for {} (expected {}x{})", key, p.value.rows(),
            p.value.cols()));
      }
      std::copy(values.begin(), values.end(), p.value.data());
      p.grad.setZero();
      consumed.insert(key);
    }
  }
  for (auto it = params.begin(); it != params.end(); ++it) {
    if (!consumed.count(it.key())) {
      throw std::invalid_argument(fmt::format("checkpoint: unexpected parameter {}", it.key()));
    }
  }
  state.epochs_done = j.at("epochs_done").get<int>();
  state.theta_r.prior.mode = prior_mode_from_string(j.at("prior").get<std::string>());
  return j.at("config");
}

}  // namespace mldgg
