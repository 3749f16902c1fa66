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

#ifndef MLDGG_RUN_CONFIG_H_
#define MLDGG_RUN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mldgg/graph.h"
#include "mldgg/meta_learner.h"

namespace mldgg {

/// One synthetic domain. Class means are mean_scale * M + mean_shift * S with
/// M, S standard-normal C x D matrices drawn from family_seed, so domains of a
/// family share M and differ along the same shift direction S.
struct DomainSpec {
  std::string name;
  std::uint64_t family_seed = 0;
  int num_nodes = 100;
  int num_classes = 3;
  int feature_dim = 8;
  double mean_scale = 1.0;
  double mean_shift = 0.0;
  double noise_std = 1.0;
  double p_in = 0.1;
  double p_out = 0.01;
  double rewire = 0.0;
  std::uint64_t seed = 0;

  SbmDomainConfig to_sbm() const;
};

struct ScenarioSpec {
  std::string mode = "S12T3";  // S1T1, S1T2 or S12T3
  std::vector<std::string> sources;
  std::string target;

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "run";
  ScenarioSpec scenario;
  std::vector<DomainSpec> domains;
  TrainConfig train;
  std::vector<int> eval_steps = {1, 5, 10, 20, 30, 40};
  std::vector<std::string> ablate_modes;  // empty means every mode
  std::vector<std::uint64_t> ablate_seeds;  // empty means {seed}
  std::string data_name = "SBM";
  double temperature = 1.0;
  int histogram_bins = 20;

  void validate() const;
  const DomainSpec& domain(const std::string& name) const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" to a config document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

Graph generate_domain(const DomainSpec& spec, std::uint64_t run_seed);

struct ScenarioGraphs {
  std::vector<Graph> sources;
  Graph target;
};

/// Loads the scenario's graphs from data_dir/<name>.json and aligns sources
/// and target together. Throws listing every absent domain.
ScenarioGraphs load_scenario(const RunConfig& cfg, const std::filesystem::path& data_dir);

/// Generates the scenario in memory (same graphs `generate` would write).
ScenarioGraphs build_scenario(const RunConfig& cfg);

}  // namespace mldgg

#endif  // MLDGG_RUN_CONFIG_H_
