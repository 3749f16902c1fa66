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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "mldgg/commands.h"
#include "mldgg/diagnostics.h"
#include "mldgg/gradcheck_suite.h"
#include "mldgg/run_config.h"

#ifndef MLDGG_CLI_PATH
#error "MLDGG_CLI_PATH must point at the built command-line binary"
#endif

namespace mldgg {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("missing " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

json small_config() {
  json domains = json::array();
  auto domain = [](const std::string& name, int family, int dim, double shift, int seed) {
    return json{{"name", name},       {"family_seed", family}, {"num_nodes", 30},
                {"num_classes", 3},   {"feature_dim", dim},    {"mean_shift", shift},
                {"p_in", 0.2},        {"p_out", 0.02},         {"seed", seed}};
  };
  domains.push_back(domain("A1", 1, 4, 0.0, 1));
  domains.push_back(domain("A2", 1, 4, 0.5, 2));
  domains.push_back(domain("B1", 2, 3, 0.0, 3));
  domains.push_back(domain("C1", 3, 5, 0.0, 4));
  return json{
      {"seed", 3},
      {"scenario", {{"mode", "S12T3"}, {"sources", {"A1", "A2", "B1"}}, {"target", "C1"}}},
      {"domains", domains},
      {"train",
       {{"epochs", 2},
        {"inner_steps", 2},
        {"hidden_dim", 6},
        {"rep_dim", 4},
        {"semantic_dim", 2},
        {"variation_dim", 2},
        {"finetune_steps", 3},
        {"num_structure_samples", 3},
        {"num_pivots", 3}}},
      {"eval", {{"steps", {0, 3}}}},
  };
}

class CommandsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() /
            fmt::format("mldgg_cmd_{}_{}", info->test_suite_name(), info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = write_config(small_config(), "config.json");
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path write_config(const json& j, const std::string& name) {
    fs::path p = root_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  CommandOptions options(const fs::path& out, const fs::path& config) const {
    CommandOptions o;
    o.config = config;
    o.out = out;
    return o;
  }
  CommandOptions options(const std::string& out) const { return options(root_ / out, config_); }

  fs::path generate() {
    fs::path data = root_ / "data";
    if (!fs::exists(data)) cmd_generate(options("data"));
    return data;
  }

  fs::path run_train(const std::string& out, std::vector<std::string> overrides = {}) {
    CommandOptions o = options(out);
    o.data = generate();
    o.overrides = std::move(overrides);
    cmd_train(o);
    return root_ / out;
  }

  fs::path root_;
  fs::path config_;
};

TEST_F(CommandsTest, GenerateWritesOneFilePerDomain) {
  fs::path data = generate();
  json manifest = json::parse(slurp(data / "manifest.json"));
  ASSERT_EQ(manifest["domains"].size(), 4u);
  for (const auto& d : manifest["domains"]) {
    Graph g = load_graph(data / d["file"].get<std::string>());
    EXPECT_EQ(g.domain, d["name"].get<std::string>());
    EXPECT_EQ(g.num_nodes, d["num_nodes"].get<int>());
  }
  EXPECT_TRUE(fs::exists(data / "run_config.json"));
  EXPECT_EQ(tree(data).size(), 6u);  // 4 graphs, manifest, run config
}

TEST_F(CommandsTest, GenerateIsByteIdentical) {
  cmd_generate(options("g1"));
  cmd_generate(options("g2"));
  auto a = tree(root_ / "g1"), b = tree(root_ / "g2");
  // run_config.json records out_dir, which differs by construction.
  a.erase("run_config.json");
  b.erase("run_config.json");
  EXPECT_EQ(a.size(), 5u);
  EXPECT_EQ(a, b);
}

TEST_F(CommandsTest, GenerateRefusesNonEmptyDirectory) {
  cmd_generate(options("g"));
  EXPECT_THROW(cmd_generate(options("g")), std::invalid_argument);
  CommandOptions forced = options("g");
  forced.force = true;
  EXPECT_NO_THROW(cmd_generate(forced));
}

TEST_F(CommandsTest, OutputHoldsExactRunConfig) {
  fs::path data = generate();
  RunConfig cfg = resolve_config(options("data"));
  EXPECT_EQ(json::parse(slurp(data / "run_config.json")), to_json(cfg));
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.train.seed, 3u);
}

TEST_F(CommandsTest, TrainOneEpochOneRow) {
  fs::path out = run_train("t", {"train.epochs=1"});
  auto rows = read_csv(out / "metrics.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0][0], "epoch");
  EXPECT_EQ(rows[1][0], "0");
  EXPECT_TRUE(fs::exists(out / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(out / "run_config.json"));
}

TEST_F(CommandsTest, TrainResumeContinuesNumbering) {
  fs::path first = run_train("t1");
  CommandOptions o = options("t2");
  o.data = generate();
  o.resume = first / "checkpoint.json";
  cmd_train(o);
  auto rows = read_csv(root_ / "t2" / "metrics.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "2");
  EXPECT_EQ(rows[2][0], "3");
}

TEST_F(CommandsTest, TrainLossesMatchReplay) {
  fs::path out = run_train("t");
  RunConfig cfg = resolve_config(options("t"));
  ScenarioGraphs graphs = load_scenario(cfg, generate());
  std::vector<EpochMetrics> replay;
  train_from_scratch(graphs.sources, cfg.train,
                     [&](const EpochMetrics& m) { replay.push_back(m); });
  auto rows = read_csv(out / "metrics.csv");
  ASSERT_EQ(rows.size(), replay.size() + 1);
  for (std::size_t i = 0; i < replay.size(); ++i) {
    const auto& r = rows[i + 1];
    EXPECT_EQ(r[1], format_float(replay[i].support_loss));
    EXPECT_EQ(r[2], format_float(replay[i].query_loss));
    EXPECT_EQ(r[3], format_float(replay[i].query_neg_elbo));
    EXPECT_EQ(r[4], format_float(replay[i].query_reg));
  }
}

TEST_F(CommandsTest, TrainMissingGraphsListsDomains) {
  generate();
  fs::remove(root_ / "data" / "A2.json");
  fs::remove(root_ / "data" / "C1.json");
  try {
    run_train("t");
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("A2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("C1"), std::string::npos) << msg;
  }
}

TEST_F(CommandsTest, EvalUntrainedIsNearChance) {
  double total = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    const std::string name = fmt::format("t{}", s);
    CommandOptions t = options(name);
    t.data = generate();
    t.seed = s;
    t.overrides = {"train.epochs=0"};
    cmd_train(t);
    CommandOptions e = options(name + "_eval");
    e.data = generate();
    e.checkpoint = root_ / name / "checkpoint.json";
    e.steps = {0};
    cmd_eval(e);
    auto rows = read_csv(root_ / (name + "_eval") / "eval.csv");
    ASSERT_EQ(rows.size(), 2u);
    total += std::stod(rows[1][1]);
  }
  EXPECT_NEAR(total / seeds, 1.0 / 3.0, 0.15);
}

TEST_F(CommandsTest, EvalDeduplicatesAndMatchesApi) {
  fs::path trained = run_train("t");
  CommandOptions e = options("e");
  e.data = generate();
  e.checkpoint = trained / "checkpoint.json";
  e.steps = {3, 0, 3};
  cmd_eval(e);
  auto rows = read_csv(root_ / "e" / "eval.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"steps", "accuracy", "correct", "query_size"}));
  EXPECT_EQ(rows[1][0], "3");
  EXPECT_EQ(rows[2][0], "0");

  RunConfig cfg = resolve_config(options("t"));
  ScenarioGraphs graphs = load_scenario(cfg, generate());
  MetaState state = train_from_scratch(graphs.sources, cfg.train);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int steps = std::stoi(rows[i][0]);
    EvalResult r = fine_tune_and_eval(state, graphs.target, steps, cfg.train, eval_rng(cfg.seed));
    EXPECT_EQ(rows[i][1], format_float(r.accuracy));
    EXPECT_EQ(rows[i][2], std::to_string(r.correct));
    EXPECT_EQ(rows[i][3], std::to_string(r.query_size));
  }
}

TEST_F(CommandsTest, EvalRejectsMismatchedCheckpoint) {
  fs::path trained = run_train("t");
  CommandOptions e = options("e");
  e.data = generate();
  e.checkpoint = trained / "checkpoint.json";
  e.overrides = {"train.hidden_dim=9"};
  EXPECT_THROW(cmd_eval(e), std::invalid_argument);
}

TEST_F(CommandsTest, AblateSingleSeedAndModeFilter) {
  CommandOptions o = options("a");
  o.data = generate();
  o.modes = {"Full", "ERM"};
  cmd_ablate(o);
  auto summary = read_csv(root_ / "a" / "ablate.csv");
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_EQ(summary[1][0], "Full");
  EXPECT_EQ(summary[2][0], "ERM");
  for (std::size_t i = 1; i < summary.size(); ++i) {
    EXPECT_EQ(summary[i][2], "0");
    EXPECT_EQ(summary[i][3], "1");
  }
  EXPECT_THROW(
      [&] {
        CommandOptions bad = options("b");
        bad.data = generate();
        bad.modes = {"Nope"};
        cmd_ablate(bad);
      }(),
      std::invalid_argument);
}

TEST_F(CommandsTest, AblateFullMatchesTrainThenEval) {
  CommandOptions o = options("a");
  o.data = generate();
  o.modes = {"Full"};
  cmd_ablate(o);
  auto runs = read_csv(root_ / "a" / "ablate_runs.csv");
  ASSERT_EQ(runs.size(), 2u);

  fs::path trained = run_train("t");
  CommandOptions e = options("e");
  e.data = generate();
  e.checkpoint = trained / "checkpoint.json";
  e.steps = {3};  // train.finetune_steps
  cmd_eval(e);
  auto eval = read_csv(root_ / "e" / "eval.csv");
  EXPECT_EQ(runs[1][2], eval[1][1]);
  EXPECT_EQ(runs[1][3], eval[1][2]);
}

TEST_F(CommandsTest, DiagnoseTagsAndMatrix) {
  fs::path trained = run_train("t");
  CommandOptions d = options("d");
  d.data = generate();
  d.checkpoint = trained / "checkpoint.json";
  cmd_diagnose(d);
  auto energy = read_csv(root_ / "d" / "energy.csv");
  ASSERT_EQ(energy.size(), 1u + 4 * 30);
  EXPECT_EQ(energy[1][0], "SBM - A1");
  EXPECT_EQ(energy.back()[0], "SBM - C1");
  auto js = read_csv(root_ / "d" / "js.csv");
  ASSERT_EQ(js.size(), 5u);
  EXPECT_EQ(js[0], (std::vector<std::string>{"domain", "A1", "A2", "B1", "C1"}));
  for (int i = 1; i <= 4; ++i) {
    EXPECT_EQ(js[i][i], "0");
    for (int j = 1; j <= 4; ++j) EXPECT_EQ(js[i][j], js[j][i]);
  }
  for (const char* name : {"A1", "A2", "B1", "C1"}) {
    EXPECT_EQ(read_csv(root_ / "d" / "embeddings" / (std::string(name) + ".csv")).size(), 31u);
  }
}

// Each command runs twice into the same directory (the second time with
// --force) and must reproduce every file byte for byte.
TEST_F(CommandsTest, EveryCommandIsDeterministic) {
  fs::path data = generate();
  auto twice = [&](const std::string& name, CommandOptions o, void (*cmd)(const CommandOptions&)) {
    cmd(o);
    auto first = tree(root_ / name);
    o.force = true;
    cmd(o);
    EXPECT_FALSE(first.empty()) << name;
    EXPECT_EQ(first, tree(root_ / name)) << name;
  };
  CommandOptions g = options("gen");
  twice("gen", g, cmd_generate);
  CommandOptions t = options("train");
  t.data = data;
  twice("train", t, cmd_train);
  CommandOptions e = options("eval");
  e.data = data;
  e.checkpoint = root_ / "train" / "checkpoint.json";
  twice("eval", e, cmd_eval);
  CommandOptions a = options("ablate");
  a.data = data;
  a.modes = {"Full", "NoRL", "ERM"};
  twice("ablate", a, cmd_ablate);
  CommandOptions d = options("diag");
  d.data = data;
  d.checkpoint = root_ / "train" / "checkpoint.json";
  twice("diag", d, cmd_diagnose);
  CommandOptions c;
  c.out = root_ / "grad";
  c.instances = 3;
  twice("grad", c, cmd_gradcheck);
}

TEST(Gradcheck, SuitePassesAndCoversOperations) {
  auto reports = run_gradcheck_suite({});
  EXPECT_GE(reports.size(), 8u);
  for (const auto& r : reports) {
    EXPECT_TRUE(r.passed) << r.op << " " << r.max_error;
    EXPECT_GE(r.instances, 10);
  }
}

TEST(Gradcheck, FlippedSignNamesOperation) {
  CommandOptions o;
  o.flip_sign = "gcn";
  o.instances = 2;
  try {
    cmd_gradcheck(o);
    FAIL();
  } catch (const CheckFailure& e) {
    EXPECT_NE(std::string(e.what()).find("gcn"), std::string::npos);
  }
}

int run_cli(const std::string& args) {
  const std::string cmd = fmt::format("\"{}\" {} >/dev/null 2>&1", MLDGG_CLI_PATH, args);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(CommandsTest, ExitCodes) {
  EXPECT_EQ(run_cli("gradcheck --instances 2"), 0);
  EXPECT_EQ(run_cli("gradcheck --instances 2 --flip-sign elbo.joint"), 2);
  EXPECT_EQ(run_cli("train"), 1);  // no --config
  EXPECT_EQ(run_cli("bogus"), 1);
  json bad = small_config();
  bad["train"]["inner_lr"] = -1.0;
  fs::path p = write_config(bad, "bad.json");
  EXPECT_EQ(run_cli(fmt::format("generate --config {} --out {}", p.string(),
                                (root_ / "g").string())),
            1);
  EXPECT_EQ(run_cli(fmt::format("generate --config {} --out {} --seed 5", config_.string(),
                                (root_ / "g").string())),
            0);
  EXPECT_EQ(json::parse(slurp(root_ / "g" / "manifest.json"))["seed"], 5);
}

}  // namespace
}  // namespace mldgg
