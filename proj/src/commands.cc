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

#include "mldgg/commands.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mldgg/diagnostics.h"
#include "mldgg/gradcheck_suite.h"

namespace mldgg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kEvalStream = 0x6576;  // "ev"
constexpr std::uint64_t kDiagStream = 0x6469;  // "di"

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument(fmt::format("cannot open {}", path.string()));
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(fmt::format("malformed {}: {}", path.string(), e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  f << text;
  if (!f) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

// Creates the output directory; refuses a non-empty one unless forced.
fs::path prepare_out(const RunConfig& cfg, bool force) {
  fs::path out = cfg.out_dir;
  if (fs::exists(out) && !fs::is_empty(out) && !force) {
    throw std::invalid_argument(
        fmt::format("output directory {} is not empty (use --force)", out.string()));
  }
  fs::create_directories(out);
  write_text(out / "run_config.json", to_json(cfg).dump(2) + "\n");
  return out;
}

fs::path data_dir(const CommandOptions& opts, const RunConfig& cfg) {
  return opts.data ? *opts.data : fs::path(cfg.data_dir);
}

std::vector<std::string> domain_names(const std::vector<Graph>& graphs) {
  std::vector<std::string> out;
  for (const auto& g : graphs) out.push_back(g.domain);
  return out;
}

int max_classes(const std::vector<Graph>& graphs) {
  int c = 0;
  for (const auto& g : graphs) c = std::max(c, g.num_classes);
  return c;
}

MetaState empty_state(const std::vector<Graph>& sources, const TrainConfig& cfg) {
  return init_meta_state(sources.front().feature_dim(), max_classes(sources),
                         domain_names(sources), cfg, Rng(cfg.seed));
}

struct LoadedModel {
  RunConfig cfg;
  ScenarioGraphs graphs;
  MetaState state;
};

LoadedModel load_model(const CommandOptions& opts) {
  if (!opts.checkpoint) throw std::invalid_argument("--checkpoint is required");
  json stored = read_json(*opts.checkpoint).at("config");
  LoadedModel m{resolve_config(opts, &stored), {}, {}};
  m.graphs = load_scenario(m.cfg, data_dir(opts, m.cfg));
  m.state = empty_state(m.graphs.sources, m.cfg.train);
  load_checkpoint(*opts.checkpoint, m.state);
  return m;
}

ModelParams reference_model(const MetaState& state, const TrainConfig& cfg) {
  const TaskParams& task = cfg.mode == AblationMode::kERM || state.tasks.empty()
                               ? state.shared
                               : state.tasks.begin()->second;
  return ModelParams{state.theta_t, state.theta_r, task.gnn, task.head};
}

std::string metrics_header() { return "epoch,support_loss,query_loss,query_neg_elbo,query_reg\n"; }

std::string metrics_row(const EpochMetrics& m) {
  return fmt::format("{},{},{},{},{}\n", m.epoch, format_float(m.support_loss),
                     format_float(m.query_loss), format_float(m.query_neg_elbo),
                     format_float(m.query_reg));
}

}  // namespace

RunConfig resolve_config(const CommandOptions& opts, const json* fallback) {
  json doc;
  if (opts.config) {
    doc = read_json(*opts.config);
  } else if (fallback != nullptr) {
    doc = *fallback;
  } else {
    throw std::invalid_argument("--config is required");
  }
  for (const auto& o : opts.overrides) apply_override(doc, o);
  if (opts.seed) doc["seed"] = *opts.seed;
  if (opts.out) doc["out_dir"] = opts.out->string();
  return run_config_from_json(doc);
}

Rng eval_rng(std::uint64_t seed) { return Rng(seed).split(kEvalStream); }

MetaState train_from_scratch(const std::vector<Graph>& sources, const TrainConfig& cfg,
                             const EpochCallback& on_epoch) {
  if (sources.empty()) throw std::invalid_argument("train: no source graphs");
  MetaState state = empty_state(sources, cfg);
  train(sources, state, cfg, on_epoch);
  return state;
}

void cmd_generate(const CommandOptions& opts) {
  RunConfig cfg = resolve_config(opts);
  fs::path out = prepare_out(cfg, opts.force);
  json manifest = {{"seed", cfg.seed}, {"domains", json::array()}};
  for (const auto& spec : cfg.domains) {
    Graph g = generate_domain(spec, cfg.seed);
    const std::string file = spec.name + ".json";
    save_graph(g, out / file);
    manifest["domains"].push_back({{"name", spec.name},
                                   {"file", file},
                                   {"seed", spec.seed},
                                   {"family_seed", spec.family_seed},
                                   {"num_nodes", g.num_nodes},
                                   {"num_edges", g.edges.size()}});
  }
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  spdlog::info("wrote {} graphs to {}", cfg.domains.size(), out.string());
}

void cmd_train(const CommandOptions& opts) {
  RunConfig cfg = resolve_config(opts);
  ScenarioGraphs graphs = load_scenario(cfg, data_dir(opts, cfg));
  fs::path out = prepare_out(cfg, opts.force);
  MetaState state = empty_state(graphs.sources, cfg.train);
  if (opts.resume) {
    load_checkpoint(*opts.resume, state);
    spdlog::info("resuming from epoch {}", state.epochs_done);
  }
  std::string csv = metrics_header();
  train(graphs.sources, state, cfg.train, [&](const EpochMetrics& m) {
    csv += metrics_row(m);
    spdlog::info("epoch {} support {:.4f} query {:.4f}", m.epoch, m.support_loss,
                 m.query_loss);
  });
  write_text(out / "metrics.csv", csv);
  save_checkpoint(state, to_json(cfg), out / "checkpoint.json");
}

void cmd_eval(const CommandOptions& opts) {
  LoadedModel m = load_model(opts);
  Graph target = m.graphs.target;
  if (opts.target) {
    std::vector<Graph> padded = zero_pad_align({m.graphs.sources.front(), load_graph(*opts.target)});
    target = padded.back();
    if (target.feature_dim() != m.state.input_dim) {
      throw std::invalid_argument(fmt::format(
          "target graph has feature dim {}, checkpoint expects {}",
          load_graph(*opts.target).feature_dim(), m.state.input_dim));
    }
  }
  std::vector<int> steps = opts.steps.empty() ? m.cfg.eval_steps : opts.steps;
  std::vector<int> unique;
  for (int s : steps) {
    if (s < 0) throw std::invalid_argument("steps must be >= 0");
    if (std::find(unique.begin(), unique.end(), s) != unique.end()) {
      spdlog::warn("duplicate step count {} ignored", s);
      continue;
    }
    unique.push_back(s);
  }
  fs::path out = prepare_out(m.cfg, opts.force);
  std::string csv = "steps,accuracy,correct,query_size\n";
  for (int s : unique) {
    EvalResult r = fine_tune_and_eval(m.state, target, s, m.cfg.train, eval_rng(m.cfg.seed));
    csv += fmt::format("{},{},{},{}\n", s, format_float(r.accuracy), r.correct, r.query_size);
    spdlog::info("steps {} accuracy {:.4f}", s, r.accuracy);
  }
  write_text(out / "eval.csv", csv);
}

void cmd_ablate(const CommandOptions& opts) {
  RunConfig cfg = resolve_config(opts);
  ScenarioGraphs graphs = load_scenario(cfg, data_dir(opts, cfg));
  std::vector<std::string> modes = !opts.modes.empty()       ? opts.modes
                                   : !cfg.ablate_modes.empty() ? cfg.ablate_modes
                                                               : std::vector<std::string>{};
  if (modes.empty()) {
    for (AblationMode m : all_ablation_modes()) modes.push_back(to_string(m));
  }
  for (const auto& m : modes) ablation_mode_from_string(m);
  std::vector<std::uint64_t> seeds = cfg.ablate_seeds;
  if (seeds.empty()) seeds.push_back(cfg.seed);
  fs::path out = prepare_out(cfg, opts.force);

  std::string runs = "mode,seed,accuracy,correct,query_size\n";
  std::string summary = "mode,mean_accuracy,std_accuracy,num_seeds\n";
  for (const auto& name : modes) {
    std::vector<double> accs;
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = cfg.train;
      tc.mode = ablation_mode_from_string(name);
      tc.seed = seed;
      MetaState state = train_from_scratch(graphs.sources, tc);
      EvalResult r = fine_tune_and_eval(state, graphs.target, tc.finetune_steps, tc,
                                        eval_rng(seed));
      accs.push_back(r.accuracy);
      runs += fmt::format("{},{},{},{},{}\n", name, seed, format_float(r.accuracy), r.correct,
                          r.query_size);
      spdlog::info("{} seed {} accuracy {:.4f}", name, seed, r.accuracy);
    }
    double mean = 0.0;
    for (double a : accs) mean += a / static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double sd = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
    summary += fmt::format("{},{},{},{}\n", name, format_float(mean), format_float(sd), accs.size());
  }
  write_text(out / "ablate_runs.csv", runs);
  write_text(out / "ablate.csv", summary);
}

void cmd_diagnose(const CommandOptions& opts) {
  LoadedModel m = load_model(opts);
  fs::path out = prepare_out(m.cfg, opts.force);
  fs::create_directories(out / "embeddings");
  std::vector<Graph> graphs = m.graphs.sources;
  graphs.push_back(m.graphs.target);
  ModelParams model = reference_model(m.state, m.cfg.train);
  const Rng rng = Rng(m.cfg.seed).split(kDiagStream);

  std::string energy_csv = "tag,node,energy\n";
  std::vector<std::vector<double>> energies;
  for (const auto& g : graphs) {
    energies.push_back(node_energies(g, model, m.cfg.train, rng, m.cfg.temperature));
    const std::string tag = fmt::format("{} - {}", m.cfg.data_name, g.domain);
    for (std::size_t i = 0; i < energies.back().size(); ++i) {
      energy_csv += fmt::format("{},{},{}\n", tag, i, format_float(energies.back()[i]));
    }
    export_embeddings(g, model, m.cfg.train, rng, out / "embeddings" / (g.domain + ".csv"));
  }
  Matrix js = js_matrix(energies, m.cfg.histogram_bins);
  std::string js_csv = "domain";
  for (const auto& g : graphs) js_csv += "," + g.domain;
  js_csv += "\n";
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    js_csv += graphs[i].domain;
    for (std::size_t j = 0; j < graphs.size(); ++j) js_csv += "," + format_float(js(i, j));
    js_csv += "\n";
  }
  write_text(out / "energy.csv", energy_csv);
  write_text(out / "js.csv", js_csv);
}

void cmd_gradcheck(const CommandOptions& opts) {
  GradCheckOptions go;
  go.seed = opts.seed.value_or(0);
  go.instances = opts.instances;
  go.flip_sign_of = opts.flip_sign;
  auto reports = run_gradcheck_suite(go);
  std::string csv = "operation,instances,max_relative_error,passed\n";
  std::vector<std::string> failed;
  for (const auto& r : reports) {
    fmt::print("{} {:<22} instances={} max_rel_error={:.3e}\n", r.passed ? "PASS" : "FAIL", r.op,
               r.instances, r.max_error);
    csv += fmt::format("{},{},{},{}\n", r.op, r.instances, format_float(r.max_error),
                       r.passed ? 1 : 0);
    if (!r.passed) failed.push_back(r.op);
  }
  fmt::print("{} operations checked, {} failed\n", reports.size(), failed.size());
  if (opts.out) {
    fs::create_directories(*opts.out);
    write_text(*opts.out / "gradcheck.csv", csv);
  }
  if (!failed.empty()) {
    throw CheckFailure(fmt::format("gradient check failed: {}", fmt::join(failed, ", ")));
  }
}

}  // namespace mldgg
