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

#include "mldgg/run_config.h"

#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace mldgg {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(fmt::format("{}: expected an object", where));
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw std::invalid_argument(fmt::format("{}{}: unknown field", where, it.key()));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    throw std::invalid_argument(fmt::format("{}{}: wrong type", where, key));
  }
}

Matrix standard_normal(Index rows, Index cols, Rng rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

json domain_to_json(const DomainSpec& d) {
  return json{{"name", d.name},           {"family_seed", d.family_seed},
              {"num_nodes", d.num_nodes}, {"num_classes", d.num_classes},
              {"feature_dim", d.feature_dim}, {"mean_scale", d.mean_scale},
              {"mean_shift", d.mean_shift},   {"noise_std", d.noise_std},
              {"p_in", d.p_in},           {"p_out", d.p_out},
              {"rewire", d.rewire},       {"seed", d.seed}};
}

DomainSpec domain_from_json(const json& j, std::size_t index) {
  const std::string where = fmt::format("domains[{}].", index);
  DomainSpec d;
  std::set<std::string> known;
  const json defaults = domain_to_json(d);
  for (auto it = defaults.begin(); it != defaults.end(); ++it) known.insert(it.key());
  reject_unknown(j, known, where);
  if (!j.contains("name")) throw std::invalid_argument(where + "name: missing field");
  read(j, "name", d.name, where);
  read(j, "family_seed", d.family_seed, where);
  read(j, "num_nodes", d.num_nodes, where);
  read(j, "num_classes", d.num_classes, where);
  read(j, "feature_dim", d.feature_dim, where);
  read(j, "mean_scale", d.mean_scale, where);
  read(j, "mean_shift", d.mean_shift, where);
  read(j, "noise_std", d.noise_std, where);
  read(j, "p_in", d.p_in, where);
  read(j, "p_out", d.p_out, where);
  read(j, "rewire", d.rewire, where);
  read(j, "seed", d.seed, where);
  if (d.feature_dim < 1) throw std::invalid_argument(where + "feature_dim: must be >= 1");
  d.to_sbm().validate();
  return d;
}

}  // namespace

SbmDomainConfig DomainSpec::to_sbm() const {
  SbmDomainConfig cfg;
  cfg.domain = name;
  cfg.num_nodes = num_nodes;
  cfg.num_classes = num_classes;
  const Rng family(family_seed);
  cfg.class_means = mean_scale * standard_normal(num_classes, feature_dim, family.split(1)) +
                    mean_shift * standard_normal(num_classes, feature_dim, family.split(2));
  cfg.noise_std = noise_std;
  cfg.p_in = p_in;
  cfg.p_out = p_out;
  cfg.rewire = rewire;
  return cfg;
}

void ScenarioSpec::validate() const {
  if (mode != "S1T1" && mode != "S1T2" && mode != "S12T3") {
    throw std::invalid_argument(fmt::format("scenario.mode: unknown scenario '{}'", mode));
  }
  if (sources.empty()) throw std::invalid_argument("scenario.sources: at least one source");
  std::set<std::string> seen;
  for (const auto& s : sources) {
    if (!seen.insert(s).second) {
      throw std::invalid_argument(fmt::format("scenario.sources: duplicate '{}'", s));
    }
  }
  if (target.empty()) throw std::invalid_argument("scenario.target: missing");
  if (seen.count(target)) {
    throw std::invalid_argument(fmt::format("scenario.target: '{}' is also a source", target));
  }
}

void RunConfig::validate() const {
  scenario.validate();
  train.validate();
  std::set<std::string> names;
  for (const auto& d : domains) {
    if (!names.insert(d.name).second) {
      throw std::invalid_argument(fmt::format("domains: duplicate name '{}'", d.name));
    }
  }
  for (const auto& s : scenario.sources) domain(s);
  domain(scenario.target);
  for (int s : eval_steps) {
    if (s < 0) throw std::invalid_argument("eval.steps: must be >= 0");
  }
  for (const auto& m : ablate_modes) ablation_mode_from_string(m);
  if (!(temperature > 0.0)) throw std::invalid_argument("diagnose.temperature: must be > 0");
  if (histogram_bins < 1) throw std::invalid_argument("diagnose.bins: must be >= 1");
}

const DomainSpec& RunConfig::domain(const std::string& name) const {
  for (const auto& d : domains) {
    if (d.name == name) return d;
  }
  throw std::invalid_argument(fmt::format("scenario: domain '{}' is not configured", name));
}

json to_json(const RunConfig& cfg) {
  json train = to_json(cfg.train);
  train.erase("seed");
  json domains = json::array();
  for (const auto& d : cfg.domains) domains.push_back(domain_to_json(d));
  return json{
      {"seed", cfg.seed},
      {"data_dir", cfg.data_dir},
      {"out_dir", cfg.out_dir},
      {"scenario",
       {{"mode", cfg.scenario.mode},
        {"sources", cfg.scenario.sources},
        {"target", cfg.scenario.target}}},
      {"domains", domains},
      {"train", train},
      {"eval", {{"steps", cfg.eval_steps}}},
      {"ablate", {{"modes", cfg.ablate_modes}, {"seeds", cfg.ablate_seeds}}},
      {"diagnose",
       {{"data_name", cfg.data_name},
        {"temperature", cfg.temperature},
        {"bins", cfg.histogram_bins}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"seed", "data_dir", "out_dir", "scenario", "domains", "train", "eval",
                     "ablate", "diagnose"},
                 "");
  RunConfig cfg;
  read(j, "seed", cfg.seed, "");
  read(j, "data_dir", cfg.data_dir, "");
  read(j, "out_dir", cfg.out_dir, "");
  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    reject_unknown(s, {"mode", "sources", "target"}, "scenario.");
    read(s, "mode", cfg.scenario.mode, "scenario.");
    read(s, "sources", cfg.scenario.sources, "scenario.");
    read(s, "target", cfg.scenario.target, "scenario.");
  }
  if (j.contains("domains")) {
    const json& ds = j.at("domains");
    if (!ds.is_array()) throw std::invalid_argument("domains: expected an array");
    for (std::size_t i = 0; i < ds.size(); ++i) cfg.domains.push_back(domain_from_json(ds[i], i));
  }
  if (j.contains("train")) {
    if (j.at("train").contains("seed")) {
      throw std::invalid_argument("train.seed: set the top-level seed instead");
    }
    cfg.train = train_config_from_json(j.at("train"));
  }
  cfg.train.seed = cfg.seed;
  if (j.contains("eval")) {
    reject_unknown(j.at("eval"), {"steps"}, "eval.");
    read(j.at("eval"), "steps", cfg.eval_steps, "eval.");
  }
  if (j.contains("ablate")) {
    reject_unknown(j.at("ablate"), {"modes", "seeds"}, "ablate.");
    read(j.at("ablate"), "modes", cfg.ablate_modes, "ablate.");
    read(j.at("ablate"), "seeds", cfg.ablate_seeds, "ablate.");
  }
  if (j.contains("diagnose")) {
    const json& d = j.at("diagnose");
    reject_unknown(d, {"data_name", "temperature", "bins"}, "diagnose.");
    read(d, "data_name", cfg.data_name, "diagnose.");
    read(d, "temperature", cfg.temperature, "diagnose.");
    read(d, "bins", cfg.histogram_bins, "diagnose.");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument(fmt::format("cannot open config {}", path.string()));
  try {
    return run_config_from_json(json::parse(f));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(fmt::format("malformed config {}: {}", path.string(), e.what()));
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument(fmt::format("override '{}': expected key=value", assignment));
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) {
      throw std::invalid_argument(fmt::format("override '{}': '{}' is not an object", key, part));
    }
    start = dot + 1;
  }
}

Graph generate_domain(const DomainSpec& spec, std::uint64_t run_seed) {
  return generate_sbm_domain(spec.to_sbm(), Rng(run_seed).split(spec.seed));
}

ScenarioGraphs load_scenario(const RunConfig& cfg, const std::filesystem::path& data_dir) {
  std::vector<std::string> names = cfg.scenario.sources;
  names.push_back(cfg.scenario.target);
  std::vector<std::string> missing;
  for (const auto& n : names) {
    if (!std::filesystem::exists(data_dir / (n + ".json"))) missing.push_back(n);
  }
  if (!missing.empty()) {
    throw std::invalid_argument(fmt::format("missing graphs in {}: {}", data_dir.string(),
                                            fmt::join(missing, ", ")));
  }
  std::vector<Graph> graphs;
  for (const auto& n : names) graphs.push_back(load_graph(data_dir / (n + ".json")));
  graphs = zero_pad_align(std::move(graphs));
  ScenarioGraphs out;
  out.target = std::move(graphs.back());
  graphs.pop_back();
  out.sources = std::move(graphs);
  return out;
}

ScenarioGraphs build_scenario(const RunConfig& cfg) {
  std::vector<Graph> graphs;
  for (const auto& n : cfg.scenario.sources) graphs.push_back(generate_domain(cfg.domain(n), cfg.seed));
  graphs.push_back(generate_domain(cfg.domain(cfg.scenario.target), cfg.seed));
  graphs = zero_pad_align(std::move(graphs));
  ScenarioGraphs out;
  out.target = std::move(graphs.back());
  graphs.pop_back();
  out.sources = std::move(graphs);
  return out;
}

}  // namespace mldgg
