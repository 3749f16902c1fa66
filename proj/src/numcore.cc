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

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>

#include "mldgg/gradcheck.h"
#include "mldgg/matrix.h"
#include "mldgg/numeric.h"
#include "mldgg/params.h"
#include "mldgg/rng.h"

namespace mldgg {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_shape(const Matrix& m, Index rows, Index cols,
                   std::string_view what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(fmt::format("{}: expected {}x{}, got {}x{}",
                                            what, rows, cols, m.rows(),
                                            m.cols()));
  }
}

// ---------------------------------------------------------------------------
// Scalar helpers.

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("empty vector");
  double hi = *std::max_element(v.begin(), v.end());
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (y <= 0) throw std::invalid_argument("softplus_inverse: y must be > 0");
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

std::vector<double> softmax(std::span<const double> logits) {
  double lse = logsumexp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - lse);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Philox4x32-10.

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

void philox4x32_10(std::uint32_t ctr[4], std::uint32_t key[2]) {
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    std::uint32_t c0 = hi1 ^ ctr[1] ^ k0;
    std::uint32_t c2 = hi0 ^ ctr[3] ^ k1;
    ctr[0] = c0;
    ctr[1] = lo1;
    ctr[2] = c2;
    ctr[3] = lo0;
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {}

void Rng::refill() {
  std::uint32_t ctr[4] = {
      static_cast<std::uint32_t>(position_),
      static_cast<std::uint32_t>(position_ >> 32),
      static_cast<std::uint32_t>(stream_),
      static_cast<std::uint32_t>(stream_ >> 32),
  };
  std::uint32_t key[2] = {static_cast<std::uint32_t>(seed_),
                          static_cast<std::uint32_t>(seed_ >> 32)};
  philox4x32_10(ctr, key);
  ++position_;
  buffer_[0] = (static_cast<std::uint64_t>(ctr[0]) << 32) | ctr[1];
  buffer_[1] = (static_cast<std::uint64_t>(ctr[2]) << 32) | ctr[3];
  buffered_ = 2;
}

std::uint64_t Rng::next_u64() {
  if (buffered_ == 0) refill();
  return buffer_[2 - buffered_--];
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * M_PI * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  // Lemire's nearly-divisionless rejection.
  std::uint64_t x = next_u64();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
  std::uint64_t low = static_cast<std::uint64_t>(m);
  if (low < n) {
    std::uint64_t threshold = -n % n;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<unsigned __int128>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

Rng Rng::split(std::uint64_t k) const {
  return Rng(seed_, splitmix64(stream_ ^ splitmix64(k + 0x5851F42D4C957F2Dull)));
}

// ---------------------------------------------------------------------------
// Parameters.

DiffParam::DiffParam(std::string name, Matrix value)
    : name(std::move(name)),
      value(std::move(value)),
      grad(Matrix::Zero(this->value.rows(), this->value.cols())) {}

DiffParam& ParamGroup::add(std::string name, Matrix value) {
  if (contains(name)) {
    throw std::invalid_argument(fmt::format("duplicate parameter '{}'", name));
  }
  params_.emplace_back(std::move(name), std::move(value));
  return params_.back();
}

bool ParamGroup::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const DiffParam& p) { return p.name == name; });
}

DiffParam& ParamGroup::at(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range(fmt::format("no parameter named '{}'", name));
}

const DiffParam& ParamGroup::at(std::string_view name) const {
  return const_cast<ParamGroup*>(this)->at(name);
}

void ParamGroup::zero_grads() {
  for (auto& p : params_) p.grad.setZero();
}

void ParamGroup::sgd_step(double lr) {
  for (auto& p : params_) p.value -= lr * p.grad;
}

std::size_t ParamGroup::num_values() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += static_cast<std::size_t>(p.value.size());
  return total;
}

ParamGroup ParamGroup::grads_as_values() const {
  ParamGroup out;
  for (const auto& p : params_) out.add(p.name, p.grad);
  return out;
}

std::vector<double> ParamGroup::flat_values() const {
  std::vector<double> out;
  out.reserve(num_values());
  for (const auto& p : params_) {
    out.insert(out.end(), p.value.data(), p.value.data() + p.value.size());
  }
  return out;
}

std::vector<double> ParamGroup::flat_grads() const {
  std::vector<double> out;
  out.reserve(num_values());
  for (const auto& p : params_) {
    out.insert(out.end(), p.grad.data(), p.grad.data() + p.grad.size());
  }
  return out;
}

void ParamGroup::set_flat_values(std::span<const double> flat) {
  if (flat.size() != num_values()) {
    throw std::invalid_argument("set_flat_values: size mismatch");
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    std::copy_n(flat.begin() + offset, p.value.size(), p.value.data());
    offset += static_cast<std::size_t>(p.value.size());
  }
}

void ParamGroup::add_flat_grads(std::span<const double> flat) {
  if (flat.size() != num_values()) {
    throw std::invalid_argument("add_flat_grads: size mismatch");
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    for (Index i = 0; i < p.grad.size(); ++i) p.grad.data()[i] += flat[offset++];
  }
}

Matrix glorot_uniform(Index rows, Index cols, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Finite differences.

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double finite_diff_check(const ScalarLoss& loss_fn, const ParamGroup& params,
                         const ParamGroup& analytic_grads, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw std::invalid_argument("finite_diff_check: epsilon must be in (0, 1e-2]");
  }
  if (analytic_grads.size() != params.size()) {
    throw std::invalid_argument("finite_diff_check: gradient group mismatch");
  }
  double base_a = loss_fn(params);
  double base_b = loss_fn(params);
  if (!(base_a == base_b)) throw std::runtime_error("loss not reproducible");

  ParamGroup probe = params;
  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    const Matrix& analytic = analytic_grads[p].value;
    require_shape(analytic, probe[p].value.rows(), probe[p].value.cols(),
                  probe[p].name);
    for (Index i = 0; i < probe[p].value.size(); ++i) {
      double& slot = probe[p].value.data()[i];
      double saved = slot;
      slot = saved + epsilon;
      double up = loss_fn(probe);
      slot = saved - epsilon;
      double down = loss_fn(probe);
      slot = saved;
      double numeric = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(analytic.data()[i], numeric));
    }
  }
  return worst;
}

}  // namespace mldgg
