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

#include <cstdio>
#include <exception>

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mldgg/commands.h"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("mldgg"));
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug etc.

  CLI::App app{"Cross-domain meta-learning for node classification on synthetic graphs"};
  app.require_subcommand(1);
  mldgg::CommandOptions opts;
  std::string config, out;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Run configuration file");
    sub->add_option("--seed", seed, "Override the run seed");
    sub->add_option("--out", out, "Output directory");
    sub->add_flag("--force", opts.force, "Allow writing into a non-empty output directory");
    sub->add_option("--set", opts.overrides, "Override a config key: dotted.key=value");
  };
  std::string data, checkpoint, resume, target;
  auto* gen = app.add_subcommand("generate", "Write the configured synthetic graphs");
  auto* tr = app.add_subcommand("train", "Meta-train on the scenario's source graphs");
  auto* ev = app.add_subcommand("eval", "Fine-tune on the target and report accuracy");
  auto* ab = app.add_subcommand("ablate", "Train and evaluate every ablation mode");
  auto* dg = app.add_subcommand("diagnose", "Energy scores, JS distances, embeddings");
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  for (auto* sub : {gen, tr, ev, ab, dg, gc}) add_common(sub);
  for (auto* sub : {tr, ev, ab, dg}) sub->add_option("--data", data, "Graph directory");
  for (auto* sub : {ev, dg}) sub->add_option("--checkpoint", checkpoint, "Checkpoint file");
  tr->add_option("--resume", resume, "Continue from a checkpoint");
  ev->add_option("--target", target, "Target graph file (default: scenario target)");
  ev->add_option("--steps", opts.steps, "Fine-tuning step counts")->delimiter(',');
  ab->add_option("--modes", opts.modes, "Restrict to these modes")->delimiter(',');
  gc->add_option("--instances", opts.instances, "Random instances per operation");
  gc->add_option("--flip-sign", opts.flip_sign, "Negate one operation's gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  auto given = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
  };
  opts.config = given(config);
  opts.out = given(out);
  opts.data = given(data);
  opts.checkpoint = given(checkpoint);
  opts.resume = given(resume);
  opts.target = given(target);
  for (auto* sub : {gen, tr, ev, ab, dg, gc}) {
    if (sub->count("--seed") > 0) opts.seed = seed;
  }

  try {
    if (*gen) mldgg::cmd_generate(opts);
    if (*tr) mldgg::cmd_train(opts);
    if (*ev) mldgg::cmd_eval(opts);
    if (*ab) mldgg::cmd_ablate(opts);
    if (*dg) mldgg::cmd_diagnose(opts);
    if (*gc) mldgg::cmd_gradcheck(opts);
  } catch (const mldgg::CheckFailure& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
