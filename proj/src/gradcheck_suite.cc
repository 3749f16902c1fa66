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

#include "mldgg/gradcheck_suite.h"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "mldgg/gcn.h"
#include "mldgg/gradcheck.h"
#include "mldgg/graph.h"
#include "mldgg/meta_learner.h"
#include "mldgg/representation_learner.h"
#include "mldgg/structure_learner.h"

namespace mldgg {

namespace {

// Several groups viewed as one, so a single finite_diff_check covers them.
ParamGroup merge_values(const std::vector<ParamGroup*>& groups) {
  ParamGroup out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto& p : *groups[g]) out.add(fmt::format("{}/{}", g, p.name), p.value);
  }
  return out;
}

ParamGroup merge_grads(const std::vector<ParamGroup*>& groups) {
  ParamGroup out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto& p : *groups[g]) out.add(fmt::format("{}/{}", g, p.name), p.grad);
  }
  return out;
}

void scatter_values(const ParamGroup& merged, const std::vector<ParamGroup*>& groups) {
  std::size_t k = 0;
  for (ParamGroup* g : groups) {
    for (auto& p : *g) p.value = merged[k++].value;
  }
}

ParamGroup single(const char* name, const Matrix& m) {
  ParamGroup g;
  g.add(name, m);
  return g;
}

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

struct Instance {
  Index n;
  Index dim;
  Graph graph;
};

Instance random_instance(Rng& rng) {
  Instance inst;
  inst.n = 2 + static_cast<Index>(rng.below(5));    // 2..6
  inst.dim = 1 + static_cast<Index>(rng.below(4));  // 1..4
  Graph& g = inst.graph;
  g.num_nodes = static_cast<int>(inst.n);
  g.num_classes = 2;
  g.domain = "check";
  g.features = random_matrix(inst.n, inst.dim, rng);
  for (int i = 0; i < g.num_nodes; ++i) {
    g.labels.push_back(i % 2);
    for (int j = i + 1; j < g.num_nodes; ++j) {
      if (rng.uniform() < 0.5) g.edges.emplace_back(i, j);
    }
  }
  return inst;
}

struct Problem {
  ParamGroup params;
  ParamGroup grads;
  ScalarLoss loss;
};

using ProblemFactory = std::function<Problem(Rng&)>;

std::vector<int> iota_nodes(Index n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Problem edge_probs_params(Rng& rng) {
  Instance inst = random_instance(rng);
  const int pivots = 1 + static_cast<int>(rng.below(4));
  auto sp = std::make_shared<StructParams>(StructParams::init(inst.dim, pivots, rng));
  sp->group[0].value = random_matrix(1, inst.dim, rng);
  Matrix r = inst.graph.features;
  Matrix weight = random_matrix(inst.n, inst.n, rng);
  EdgeProbCache cache;
  edge_probs(r, *sp, &cache);
  sp->group.zero_grads();
  edge_probs_backward(cache, weight, *sp);
  auto loss = [sp, r, weight](const ParamGroup& g) {
    StructParams probe = *sp;
    probe.group = g;
    return edge_probs(r, probe).cwiseProduct(weight).sum();
  };
  return {sp->group, sp->group.grads_as_values(), loss};
}

Problem edge_probs_input(Rng& rng) {
  Instance inst = random_instance(rng);
  Rng init = rng.split(1);
  StructParams sp = StructParams::init(inst.dim, 2, init);
  Matrix weight = random_matrix(inst.n, inst.n, rng);
  EdgeProbCache cache;
  edge_probs(inst.graph.features, sp, &cache);
  Matrix d_input;
  edge_probs_backward(cache, weight, sp, &d_input);
  auto loss = [sp, weight](const ParamGroup& g) {
    return edge_probs(g[0].value, sp).cwiseProduct(weight).sum();
  };
  return {single("r", inst.graph.features), single("r", d_input), loss};
}

Problem reinforce(Rng& rng) {
  Instance inst = random_instance(rng);
  auto sp = std::make_shared<StructParams>(StructParams::init(inst.dim, 2, rng));
  Matrix r = inst.graph.features;
  Matrix f = edge_probs(r, *sp);
  StructLearnerConfig cfg;
  auto samples = sample_structures(f, 4, rng);
  for (auto& s : samples) s.reward = structure_reward(s.adjacency, r, cfg) + rng.normal();
  sp->group.zero_grads();
  reinforce_loss_and_grad(samples, r, *sp, 1.0);
  auto loss = [sp, samples, r](const ParamGroup& g) {
    StructParams probe = *sp;
    probe.group = g;
    return reinforce_loss_and_grad(samples, r, probe, 0.0);
  };
  return {sp->group, sp->group.grads_as_values(), loss};
}

struct GcnSetup {
  Matrix x, a_hat, a_prime;
  GnnParams params;
  Matrix weight;
  double lambda;
};

GcnSetup gcn_setup(Rng& rng) {
  Instance inst = random_instance(rng);
  GcnSetup s;
  s.x = inst.graph.features;
  s.a_hat = normalize_adjacency(inst.graph);
  Matrix other = Matrix::Zero(inst.n, inst.n);
  for (Index i = 0; i < inst.n; ++i) {
    for (Index j = i + 1; j < inst.n; ++j) {
      if (rng.uniform() < 0.5) other(i, j) = other(j, i) = 1.0;
    }
  }
  s.a_prime = normalize_adjacency(other);
  std::vector<Index> dims = {inst.dim, 1 + static_cast<Index>(rng.below(4)),
                             1 + static_cast<Index>(rng.below(4))};
  s.params = GnnParams::init(dims, rng);
  s.weight = random_matrix(inst.n, dims.back(), rng);
  s.lambda = rng.uniform();
  return s;
}

Problem gcn_weights(Rng& rng) {
  auto s = std::make_shared<GcnSetup>(gcn_setup(rng));
  GcnCache cache;
  gcn_forward(s->x, s->a_hat, s->a_prime, s->params, s->lambda, &cache);
  s->params.group.zero_grads();
  gcn_backward(cache, s->weight, s->params);
  auto loss = [s](const ParamGroup& g) {
    GnnParams probe = s->params;
    probe.group = g;
    return gcn_forward(s->x, s->a_hat, s->a_prime, probe, s->lambda).cwiseProduct(s->weight).sum();
  };
  return {s->params.group, s->params.group.grads_as_values(), loss};
}

Problem gcn_input(Rng& rng) {
  auto s = std::make_shared<GcnSetup>(gcn_setup(rng));
  GcnCache cache;
  gcn_forward(s->x, s->a_hat, s->a_prime, s->params, s->lambda, &cache);
  Matrix d_x;
  gcn_backward(cache, s->weight, s->params, &d_x);
  auto loss = [s](const ParamGroup& g) {
    return gcn_forward(g[0].value, s->a_hat, s->a_prime, s->params, s->lambda)
        .cwiseProduct(s->weight)
        .sum();
  };
  return {single("x", s->x), single("x", d_x), loss};
}

Problem cross_entropy_head(Rng& rng) {
  Instance inst = random_instance(rng);
  const int classes = 2 + static_cast<int>(rng.below(3));
  auto head = std::make_shared<ClassifierParams>(ClassifierParams::init(inst.dim, classes, rng));
  head->group[1].value = random_matrix(1, classes, rng);
  std::vector<int> labels(inst.n);
  for (auto& y : labels) y = static_cast<int>(rng.below(classes));
  auto nodes = iota_nodes(inst.n);
  Matrix r = inst.graph.features;
  cross_entropy(r, nodes, labels, *head, 1.0);
  auto loss = [head, r, nodes, labels](const ParamGroup& g) {
    ClassifierParams probe = *head;
    probe.group = g;
    return cross_entropy(r, nodes, labels, probe);
  };
  return {head->group, head->group.grads_as_values(), loss};
}

Problem cross_entropy_input(Rng& rng) {
  Instance inst = random_instance(rng);
  auto head = std::make_shared<ClassifierParams>(ClassifierParams::init(inst.dim, 3, rng));
  std::vector<int> labels(inst.n);
  for (auto& y : labels) y = static_cast<int>(rng.below(3));
  auto nodes = iota_nodes(inst.n);
  Matrix d_r = Matrix::Zero(inst.n, inst.dim);
  cross_entropy(inst.graph.features, nodes, labels, *head, 1.0, &d_r);
  auto loss = [head, nodes, labels](const ParamGroup& g) {
    ClassifierParams probe = *head;
    return cross_entropy(g[0].value, nodes, labels, probe);
  };
  return {single("r", inst.graph.features), single("r", d_r), loss};
}

struct ElboSetup {
  Matrix r;
  std::vector<int> nodes, labels;
  RepParams params;
  Rng rng{0};
};

ElboSetup elbo_setup(Rng& rng, PriorMode mode) {
  Instance inst = random_instance(rng);
  ElboSetup s;
  s.r = inst.graph.features;
  RepConfig cfg{inst.dim, 1 + static_cast<int>(rng.below(3)),
                1 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(2)), mode};
  s.params = RepParams::init(cfg, rng);
  // Move the prior off the identity so every Cholesky entry matters.
  Matrix& chol = s.params.prior.group[0].value;
  for (Index i = 0; i < chol.rows(); ++i) {
    for (Index j = 0; j <= i; ++j) chol(i, j) += 0.3 * rng.normal();
  }
  for (int i = 0; i < inst.n; ++i) {
    s.labels.push_back(static_cast<int>(rng.below(cfg.num_classes)));
  }
  s.nodes = iota_nodes(inst.n);
  s.rng = rng.split(77);
  return s;
}

Problem elbo_params(Rng& rng, PriorMode mode) {
  auto s = std::make_shared<ElboSetup>(elbo_setup(rng, mode));
  auto groups = s->params.groups();
  s->params.zero_grads();
  elbo(s->r, s->nodes, s->labels, 3, s->params, s->rng, 1.0);
  ParamGroup values = merge_values(groups);
  ParamGroup grads = merge_grads(groups);
  auto loss = [s](const ParamGroup& g) {
    RepParams probe = s->params;
    scatter_values(g, probe.groups());
    return elbo(s->r, s->nodes, s->labels, 3, probe, s->rng).value();
  };
  return {values, grads, loss};
}

Problem elbo_input(Rng& rng) {
  auto s = std::make_shared<ElboSetup>(elbo_setup(rng, PriorMode::kJoint));
  Matrix d_r = Matrix::Zero(s->r.rows(), s->r.cols());
  elbo(s->r, s->nodes, s->labels, 3, s->params, s->rng, 1.0, &d_r);
  auto loss = [s](const ParamGroup& g) {
    RepParams probe = s->params;
    return elbo(g[0].value, s->nodes, s->labels, 3, probe, s->rng).value();
  };
  return {single("r", s->r), single("r", d_r), loss};
}

Problem prior_density(Rng& rng) {
  const Index k = 2 + static_cast<Index>(rng.below(3));
  auto prior = std::make_shared<PriorParams>();
  prior->mode = PriorMode::kJoint;
  Matrix raw = random_matrix(k, k, rng, 0.5);
  for (Index i = 0; i < k; ++i) raw(i, i) = identity_cholesky_raw_diag() + 0.3 * rng.normal();
  prior->group.add("chol", raw);
  const Vector z = random_matrix(k, 1, rng);
  Vector d_z = prior_log_density_backward(z, *prior, 1.0);
  ParamGroup values = merge_values({&prior->group});
  values.add("z", z);
  ParamGroup grads = merge_grads({&prior->group});
  grads.add("z", d_z);
  auto loss = [prior](const ParamGroup& g) {
    PriorParams probe = *prior;
    probe.group[0].value = g[0].value;
    return prior_log_density(g[1].value, probe);
  };
  return {values, grads, loss};
}

Problem task_loss_mode(Rng& rng, AblationMode mode) {
  Instance inst = random_instance(rng);
  while (inst.n < 4) inst = random_instance(rng);
  auto graph = std::make_shared<Graph>(inst.graph);
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.structure.num_samples = 3;
  cfg.structure.num_pivots = 2;
  cfg.hidden_dim = 3;
  cfg.rep_dim = 3;
  cfg.semantic_dim = 2;
  cfg.variation_dim = 2;
  cfg.elbo_samples = 2;
  cfg.support_fraction = 0.5;
  cfg.mix = 0.3 + 0.4 * rng.uniform();
  MetaState meta = init_meta_state(graph->feature_dim(), graph->num_classes, {"check"},
                                   cfg, rng.split(1));
  auto model = std::make_shared<ModelParams>(
      ModelParams{meta.theta_t, meta.theta_r, meta.tasks.at("check").gnn,
                  meta.tasks.at("check").head});
  auto ctx = std::make_shared<TaskContext>(prepare_task(*graph, meta.theta_t, cfg, rng.split(2)));
  const Rng loss_rng = rng.split(3);
  model->zero_grads();
  task_loss(*ctx, ctx->split.support, *model, cfg, loss_rng, true);
  auto groups = model->groups();
  ParamGroup values = merge_values(groups);
  ParamGroup grads = merge_grads(groups);
  auto loss = [graph, model, ctx, cfg, loss_rng](const ParamGroup& g) {
    ModelParams probe = *model;
    scatter_values(g, probe.groups());
    return task_loss(*ctx, ctx->split.support, probe, cfg, loss_rng, false).total;
  };
  return {values, grads, loss};
}

const std::vector<std::pair<std::string, ProblemFactory>>& registry() {
  static const std::vector<std::pair<std::string, ProblemFactory>> ops = {
      {"edge_probs", edge_probs_params},
      {"edge_probs.input", edge_probs_input},
      {"reinforce_surrogate", reinforce},
      {"gcn", gcn_weights},
      {"gcn.input", gcn_input},
      {"cross_entropy", cross_entropy_head},
      {"cross_entropy.input", cross_entropy_input},
      {"elbo.joint", [](Rng& r) { return elbo_params(r, PriorMode::kJoint); }},
      {"elbo.independent", [](Rng& r) { return elbo_params(r, PriorMode::kIndependent); }},
      {"elbo.input", elbo_input},
      {"prior_log_density", prior_density},
      {"task_loss.full", [](Rng& r) { return task_loss_mode(r, AblationMode::kFull); }},
      {"task_loss.no_rl", [](Rng& r) { return task_loss_mode(r, AblationMode::kNoRL); }},
  };
  return ops;
}

}  // namespace

std::vector<std::string> gradcheck_operations() {
  std::vector<std::string> out;
  for (const auto& entry : registry()) out.push_back(entry.first);
  return out;
}

std::vector<GradCheckReport> run_gradcheck_suite(const GradCheckOptions& opts) {
  if (opts.instances < 1) throw std::invalid_argument("gradcheck: instances must be >= 1");
  if (!opts.flip_sign_of.empty()) {
    auto names = gradcheck_operations();
    if (std::find(names.begin(), names.end(), opts.flip_sign_of) == names.end()) {
      throw std::invalid_argument(
          fmt::format("gradcheck: unknown operation '{}'", opts.flip_sign_of));
    }
  }
  std::vector<GradCheckReport> reports;
  const Rng root(opts.seed);
  for (std::size_t k = 0; k < registry().size(); ++k) {
    const auto& [name, factory] = registry()[k];
    GradCheckReport rep{name, opts.instances, 0.0, true};
    for (int i = 0; i < opts.instances; ++i) {
      Rng rng = root.split(k).split(static_cast<std::uint64_t>(i));
      Problem p = factory(rng);
      if (name == opts.flip_sign_of) {
        for (auto& g : p.grads) g.value = -g.value;
      }
      rep.max_error =
          std::max(rep.max_error, finite_diff_check(p.loss, p.params, p.grads, opts.epsilon));
    }
    rep.passed = rep.max_error <= opts.tolerance;
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace mldgg
