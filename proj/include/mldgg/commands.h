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

#ifndef MLDGG_COMMANDS_H_
#define MLDGG_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mldgg/run_config.h"

namespace mldgg {

// Raised when a verification command ran but found a failure (exit code 2).
class CheckFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool force = false;
  std::vector<std::string> overrides;  // "dotted.key=value"

  std::optional<std::filesystem::path> data;        // graph directory
  std::optional<std::filesystem::path> checkpoint;  // eval, diagnose
  std::optional<std::filesystem::path> resume;      // train
  std::optional<std::filesystem::path> target;      // eval: explicit graph file
  std::vector<int> steps;                           // eval
  std::vector<std::string> modes;                   // ablate
  int instances = 10;                               // gradcheck
  std::string flip_sign;                            // gradcheck self-test
};

/// Config file (or checkpoint config when `fallback` is given), then --set
/// overrides, then --seed and --out.
RunConfig resolve_config(const CommandOptions& opts,
                         const nlohmann::json* fallback = nullptr);

// Stream used for every target fine-tuning run of a given seed.
Rng eval_rng(std::uint64_t seed);

/// Trains from scratch the way `train` and `ablate` both do.
MetaState train_from_scratch(const std::vector<Graph>& sources, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = nullptr);

void cmd_generate(const CommandOptions& opts);
void cmd_train(const CommandOptions& opts);
void cmd_eval(const CommandOptions& opts);
void cmd_ablate(const CommandOptions& opts);
void cmd_diagnose(const CommandOptions& opts);
void cmd_gradcheck(const CommandOptions& opts);

}  // namespace mldgg

#endif  // MLDGG_COMMANDS_H_
