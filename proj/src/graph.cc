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

#include "mldgg/graph.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace mldgg {

using nlohmann::json;

void Graph::validate() const {
  if (num_nodes < 0) throw std::invalid_argument("num_nodes: must be >= 0");
  if (num_classes < 1) throw std::invalid_argument("num_classes: must be >= 1");
  if (features.rows() != num_nodes) {
    throw std::invalid_argument(fmt::format(
        "features: expected {} rows, got {}", num_nodes, features.rows()));
  }
  if (!features.allFinite()) {
    throw std::invalid_argument("features: non-finite value");
  }
  if (static_cast<int>(labels.size()) != num_nodes) {
    throw std::invalid_argument(fmt::format(
        "labels: expected {} entries, got {}", num_nodes, labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument(
          fmt::format("labels[{}]: label out of range ({})", i, labels[i]));
    }
  }
  std::set<Edge> seen;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [a, b] = edges[e];
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
      throw std::invalid_argument(fmt::format(
          "edges[{}]: edge endpoint out of range ({}, {})", e, a, b));
    }
    if (a == b) {
      throw std::invalid_argument(fmt::format("edges[{}]: self-loop", e));
    }
    if (!seen.emplace(std::min(a, b), std::max(a, b)).second) {
      throw std::invalid_argument(
          fmt::format("edges[{}]: duplicate pair ({}, {})", e, a, b));
    }
  }
}

Matrix Graph::adjacency() const {
  Matrix a = Matrix::Zero(num_nodes, num_nodes);
  for (auto [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

bool operator==(const Graph& a, const Graph& b) {
  return a.num_nodes == b.num_nodes && a.num_classes == b.num_classes &&
         a.domain == b.domain && a.edges == b.edges && a.labels == b.labels &&
         a.features.rows() == b.features.rows() &&
         a.features.cols() == b.features.cols() && a.features == b.features;
}

json graph_to_json(const Graph& g) {
  json j = json::object();
  j["num_nodes"] = g.num_nodes;
  j["num_classes"] = g.num_classes;
  j["domain"] = g.domain;
  json edges = json::array();
  for (auto [a, b] : g.edges) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  json features = json::array();
  for (Index i = 0; i < g.features.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < g.features.cols(); ++k) row.push_back(g.features(i, k));
    features.push_back(std::move(row));
  }
  j["features"] = std::move(features);
  j["labels"] = g.labels;
  return j;
}

namespace {

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw std::invalid_argument(fmt::format("{}: missing field", name));
  }
  return *it;
}

int int_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number_integer()) {
    throw std::invalid_argument(fmt::format("{}: expected integer", name));
  }
  return v.get<int>();
}

}  // namespace

Graph graph_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("graph: expected an object");
  static const std::set<std::string> kKnown = {
      "num_nodes", "num_classes", "domain", "edges", "features", "labels"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kKnown.count(it.key())) {
      throw std::invalid_argument(fmt::format("{}: unknown field", it.key()));
    }
  }
  Graph g;
  g.num_nodes = int_field(j, "num_nodes");
  g.num_classes = int_field(j, "num_classes");
  const json& domain = field(j, "domain");
  if (!domain.is_string()) throw std::invalid_argument("domain: expected string");
  g.domain = domain.get<std::string>();

  const json& edges = field(j, "edges");
  if (!edges.is_array()) throw std::invalid_argument("edges: expected array");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const json& pair = edges[e];
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number_integer()) {
      throw std::invalid_argument(
          fmt::format("edges[{}]: expected a pair of integers", e));
    }
    g.edges.emplace_back(pair[0].get<int>(), pair[1].get<int>());
  }

  const json& features = field(j, "features");
  if (!features.is_array()) throw std::invalid_argument("features: expected array");
  std::size_t width = features.empty() ? 0 : features[0].size();
  g.features = Matrix::Zero(static_cast<Index>(features.size()),
                            static_cast<Index>(width));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json& row = features[i];
    if (!row.is_array() || row.size() != width) {
      throw std::invalid_argument(
          fmt::format("features[{}]: expected {} numbers", i, width));
    }
    for (std::size_t k = 0; k < width; ++k) {
      if (!row[k].is_number()) {
        throw std::invalid_argument(
            fmt::format("features[{}][{}]: expected number", i, k));
      }
      g.features(static_cast<Index>(i), static_cast<Index>(k)) =
          row[k].get<double>();
    }
  }

  const json& labels = field(j, "labels");
  if (!labels.is_array()) throw std::invalid_argument("labels: expected array");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].is_number_integer()) {
      throw std::invalid_argument(fmt::format("labels[{}]: expected integer", i));
    }
    g.labels.push_back(labels[i].get<int>());
  }
  g.validate();
  return g;
}

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open graph file {}", path.string()));
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(
        fmt::format("{}: malformed graph file: {}", path.string(), e.what()));
  }
  return graph_from_json(j);
}

void save_graph(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  out << graph_to_json(g).dump() << '\n';
}

Matrix normalize_adjacency(const Graph& g) {
  return normalize_adjacency(g.adjacency());
}

Matrix normalize_adjacency(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  require_shape(adjacency, n, n, "normalize_adjacency");
  Matrix a = adjacency;
  a.diagonal().array() += 1.0;
  Vector inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

void SbmDomainConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (num_classes < 1) throw std::invalid_argument("num_classes: must be >= 1");
  if (num_nodes < num_classes) {
    throw std::invalid_argument("fewer nodes than classes");
  }
  if (class_means.rows() != num_classes || class_means.cols() < 1) {
    throw std::invalid_argument("class_means: expected num_classes rows");
  }
  if (!in_unit(p_in)) throw std::invalid_argument("p_in: must be in [0,1]");
  if (!in_unit(p_out)) throw std::invalid_argument("p_out: must be in [0,1]");
  if (!in_unit(rewire)) throw std::invalid_argument("rewire: must be in [0,1]");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std: must be >= 0");
}

Graph generate_sbm_domain(const SbmDomainConfig& cfg, Rng rng) {
  cfg.validate();
  const int n = cfg.num_nodes;
  Graph g;
  g.num_nodes = n;
  g.num_classes = cfg.num_classes;
  g.domain = cfg.domain;
  g.labels.resize(n);
  for (int i = 0; i < n; ++i) g.labels[i] = i % cfg.num_classes;

  Rng feature_rng = rng.split(1);
  g.features = Matrix(n, cfg.class_means.cols());
  for (int i = 0; i < n; ++i) {
    for (Index k = 0; k < g.features.cols(); ++k) {
      g.features(i, k) =
          cfg.class_means(g.labels[i], k) + cfg.noise_std * feature_rng.normal();
    }
  }

  Rng edge_rng = rng.split(2);
  std::set<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double p = g.labels[i] == g.labels[j] ? cfg.p_in : cfg.p_out;
      if (edge_rng.uniform() < p) edges.emplace(i, j);
    }
  }

  Rng rewire_rng = rng.split(3);
  auto to_move = static_cast<std::size_t>(std::floor(cfg.rewire * edges.size()));
  const std::size_t max_edges = static_cast<std::size_t>(num_pairs(n));
  if (to_move > 0) {
    std::vector<Edge> pool(edges.begin(), edges.end());
    // Partial Fisher-Yates: the first to_move entries are the removed edges.
    for (std::size_t i = 0; i < to_move; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rewire_rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      edges.erase(pool[i]);
    }
    std::size_t added = 0;
    while (added < to_move && edges.size() < max_edges) {
      int a = static_cast<int>(rewire_rng.below(n));
      int b = static_cast<int>(rewire_rng.below(n));
      if (a == b) continue;
      if (edges.emplace(std::min(a, b), std::max(a, b)).second) ++added;
    }
  }
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

std::vector<Graph> zero_pad_align(std::vector<Graph> graphs) {
  Index max_dim = 0;
  int max_classes = 0;
  for (const auto& g : graphs) {
    max_dim = std::max(max_dim, g.feature_dim());
    max_classes = std::max(max_classes, g.num_classes);
  }
  for (auto& g : graphs) {
    if (g.feature_dim() < max_dim) {
      Matrix padded = Matrix::Zero(g.num_nodes, max_dim);
      padded.leftCols(g.feature_dim()) = g.features;
      g.features = std::move(padded);
    }
    g.num_classes = max_classes;
  }
  return graphs;
}

EpisodeSplit split_episode(const Graph& g, double support_fraction, Rng rng) {
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("support_fraction: must be in (0, 1)");
  }
  const int n = g.num_nodes;
  int target = static_cast<int>(std::lround(support_fraction * n));
  if (n >= 2) target = std::clamp(target, 1, n - 1);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(std::span<int>(order));

  std::vector<int> class_count(g.num_classes, 0);
  for (int y : g.labels) ++class_count[y];

  std::vector<char> in_support(n, 0);
  std::vector<char> class_covered(g.num_classes, 0);
  int chosen = 0;
  for (int node : order) {
    int y = g.labels[node];
    if (class_count[y] >= 2 && !class_covered[y]) {
      class_covered[y] = 1;
      in_support[node] = 1;
      ++chosen;
    }
  }
  for (int node : order) {
    if (chosen >= target) break;
    if (!in_support[node]) {
      in_support[node] = 1;
      ++chosen;
    }
  }

  EpisodeSplit split;
  for (int i = 0; i < n; ++i) {
    (in_support[i] ? split.support : split.query).push_back(i);
  }
  for (int y = 0; y < g.num_classes; ++y) {
    if (class_count[y] >= 2 && !class_covered[y]) {
      throw std::logic_error("split_episode: class missing from support");
    }
  }
  return split;
}

}  // namespace mldgg
