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

#ifndef MLDGG_GRAPH_H_
#define MLDGG_GRAPH_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mldgg/matrix.h"
#include "mldgg/rng.h"

namespace mldgg {

using Edge = std::pair<int, int>;

/// One domain's graph. Undirected, each pair stored once, no self-loops.
struct Graph {
  int num_nodes = 0;
  int num_classes = 0;
  std::string domain;
  std::vector<Edge> edges;
  Matrix features;  // num_nodes x D
  std::vector<int> labels;

  Index feature_dim() const { return features.cols(); }

  // Throws std::invalid_argument naming the violated field.
  void validate() const;

  // Dense symmetric 0/1 adjacency without self-loops.
  Matrix adjacency() const;
};

bool operator==(const Graph& a, const Graph& b);

nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);

Graph load_graph(const std::filesystem::path& path);
void save_graph(const Graph& g, const std::filesystem::path& path);

// D~^{-1/2} (A + I) D~^{-1/2}, D~ the degree matrix of A + I.
Matrix normalize_adjacency(const Graph& g);
Matrix normalize_adjacency(const Matrix& adjacency);

struct SbmDomainConfig {
  std::string domain;
  int num_nodes = 0;
  int num_classes = 0;
  Matrix class_means;  // num_classes x D
  double noise_std = 1.0;
  double p_in = 0.1;
  double p_out = 0.01;
  double rewire = 0.0;  // fraction of edges rewired uniformly at random

  void validate() const;
};

/// Labels round-robin, features = class mean + N(0, noise_std^2), pairs
/// connected with p_in / p_out, then floor(rewire * |E|) edges moved to
/// uniformly random unconnected pairs.
Graph generate_sbm_domain(const SbmDomainConfig& cfg, Rng rng);

// Pads features with zero columns to the widest D and raises num_classes to
// the largest C. Labels and existing feature values are untouched.
std::vector<Graph> zero_pad_align(std::vector<Graph> graphs);

struct EpisodeSplit {
  std::vector<int> support;
  std::vector<int> query;
};

/// Uniform random partition with |support| = round(fraction * n). Every class
/// with at least two nodes gets a support node first; the rest of the support
/// is filled uniformly from the remaining nodes. Both lists are sorted.
EpisodeSplit split_episode(const Graph& g, double support_fraction, Rng rng);

}  // namespace mldgg

#endif  // MLDGG_GRAPH_H_
