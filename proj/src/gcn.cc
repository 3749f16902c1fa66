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

#include "mldgg/gcn.h"

#include <cstring>
#include <stdexcept>

#include <fmt/format.h>

namespace mldgg {

GnnParams GnnParams::init(const std::vector<Index>& dims, Rng& rng) {
  if (dims.size() < 2) {
    throw std::invalid_argument("GnnParams: need at least input and output dims");
  }
  GnnParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.group.add(fmt::format("w{}", l), glorot_uniform(dims[l], dims[l + 1], rng));
  }
  return p;
}

std::uint64_t fingerprint(const ParamGroup& group) {
  // FNV-1a over the raw value bytes.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : group) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    for (std::size_t i = 0; i < sizeof(double) * p.value.size(); ++i) {
      h = (h ^ bytes[i]) * 0x100000001b3ull;
    }
  }
  return h;
}

Matrix gcn_forward(const Matrix& x, const Matrix& a_hat, const Matrix& a_prime_hat,
                   const GnnParams& params, double lambda, GcnCache* cache) {
  const Index n = x.rows();
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("gcn_forward: lambda must be in [0,1]");
  }
  require_shape(a_hat, n, n, "gcn_forward: A_hat");
  require_shape(a_prime_hat, n, n, "gcn_forward: A'_hat");

  Matrix mixed = lambda == 1.0 ? a_hat
                 : lambda == 0.0 ? a_prime_hat
                                 : Matrix(lambda * a_hat + (1.0 - lambda) * a_prime_hat);
  if (cache != nullptr) {
    cache->propagated.clear();
    cache->pre_act.clear();
  }
  Matrix current = x;
  const std::size_t layers = params.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = params.weight(l);
    if (w.rows() != current.cols()) {
      throw std::invalid_argument(fmt::format(
          "gcn_forward: layer {} expects input dim {}, got {}", l, w.rows(),
          current.cols()));
    }
    Matrix propagated = mixed * current;
    Matrix pre = propagated * w;
    if (cache != nullptr) {
      cache->propagated.push_back(std::move(propagated));
      cache->pre_act.push_back(pre);
    }
    current = (l + 1 < layers) ? Matrix(pre.cwiseMax(0.0)) : std::move(pre);
  }
  if (cache != nullptr) {
    cache->mixed_adj = std::move(mixed);
    cache->param_fingerprint = fingerprint(params.group);
    cache->valid = true;
  }
  return current;
}

void gcn_backward(const GcnCache& cache, const Matrix& d_output, GnnParams& params,
                  Matrix* d_input) {
  if (!cache.valid || cache.pre_act.size() != params.num_layers() ||
      cache.param_fingerprint != fingerprint(params.group)) {
    throw std::logic_error("gcn_backward: stale cache");
  }
  const std::size_t layers = params.num_layers();
  require_shape(d_output, cache.pre_act.back().rows(), cache.pre_act.back().cols(),
                "gcn_backward: upstream gradient");
  Matrix d_pre = d_output;
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) {
      d_pre = (cache.pre_act[l].array() > 0.0).select(d_pre, 0.0);
    }
    params.group[l].grad += cache.propagated[l].transpose() * d_pre;
    if (l == 0 && d_input == nullptr) break;
    Matrix d_current =
        cache.mixed_adj.transpose() * (d_pre * params.weight(l).transpose());
    if (l == 0) {
      *d_input = std::move(d_current);
    } else {
      d_pre = std::move(d_current);
    }
  }
}

}  // namespace mldgg
