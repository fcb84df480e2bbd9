// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace tgc {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    require(d > 0, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == shape_product(shape_), "tensor data length does not match shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void matvec_add(const Tensor& a, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = a.rows(), cols = a.cols();
  require(x.size() == cols && y.size() == rows, "matvec shape mismatch");
  const double* p = a.values().data();
  for (std::size_t r = 0; r < rows; ++r, p += cols) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += p[c] * x[c];
    y[r] += acc;
  }
}

void matvec_t_add(const Tensor& a, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = a.rows(), cols = a.cols();
  require(x.size() == rows && y.size() == cols, "matvec_t shape mismatch");
  const double* p = a.values().data();
  for (std::size_t r = 0; r < rows; ++r, p += cols) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) y[c] += p[c] * xr;
  }
}

void outer_add(Tensor& a, std::span<const double> u, std::span<const double> v) {
  const std::size_t rows = a.rows(), cols = a.cols();
  require(u.size() == rows && v.size() == cols, "outer product shape mismatch");
  double* p = a.values().data();
  for (std::size_t r = 0; r < rows; ++r, p += cols) {
    const double ur = u[r];
    if (ur == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) p[c] += ur * v[c];
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "dot length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax of an empty vector");
  double top = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) fail(ErrorCode::kNumeric, "softmax input is not finite");
    top = std::max(top, x);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

Tensor softmax(const Tensor& logits) { return Tensor(logits.shape(), softmax(logits.values())); }

std::vector<double> log_softmax(std::span<const double> logits) {
  require(!logits.empty(), "log_softmax of an empty vector");
  double top = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) fail(ErrorCode::kNumeric, "log_softmax input is not finite");
    top = std::max(top, x);
  }
  double total = 0.0;
  for (double x : logits) total += std::exp(x - top);
  const double lse = top + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  require(!v.empty(), "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

bool on_simplex(std::span<const double> p, double tol) {
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    total += x;
  }
  return std::abs(total - 1.0) <= tol;
}

std::size_t Rng::below(std::size_t n) {
  require(n > 0, "Rng::below(0)");
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
  require(shape > 0.0, "gamma shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale by U^(1/shape).
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(std::span<const double> concentration) {
  std::vector<double> out(concentration.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = gamma(concentration[i]);
    total += out[i];
  }
  if (total <= 0.0) {
    // Every component underflowed; fall back to a single uniform pick.
    std::fill(out.begin(), out.end(), 0.0);
    out[below(out.size())] = 1.0;
    return out;
  }
  for (double& x : out) x /= total;
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  require(!probs.empty(), "sample_categorical on an empty distribution");
  double total = 0.0;
  for (double p : probs) {
    require(p >= 0.0 && std::isfinite(p), "sample_categorical needs non-negative finite weights");
    total += p;
  }
  require(total > 0.0, "sample_categorical: all weights are zero");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

void adam_step(Tensor& params, const Tensor& grads, AdamState& state) {
  require(params.same_shape(grads), "adam_step: gradient shape does not match parameters");
  require(params.same_shape(state.m) && params.same_shape(state.v),
          "adam_step: optimizer state shape does not match parameters");
  const AdamConfig& cfg = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  auto p = params.values();
  auto g = grads.values();
  auto m = state.m.values();
  auto v = state.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

double clip_global_norm(std::span<Tensor* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads)
    for (double x : g->values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor* g : grads)
      for (double& x : g->values()) x *= scale;
  }
  return norm;
}

double gradient_check(const ScalarFn& loss, std::span<const double> params,
                      std::span<const double> analytic, std::span<const std::size_t> coords,
                      double perturbation) {
  require(params.size() == analytic.size(), "gradient_check: analytic gradient length mismatch");
  require(perturbation > 0.0, "gradient_check: perturbation must be positive");
  std::vector<double> probe(params.begin(), params.end());
  const double base = loss(probe);
  if (!std::isfinite(base)) fail(ErrorCode::kNumeric, "gradient_check: loss is not finite");
  double worst = 0.0;
  for (std::size_t i : coords) {
    require(i < params.size(), "gradient_check: coordinate out of range");
    const double saved = probe[i];
    probe[i] = saved + perturbation;
    const double up = loss(probe);
    probe[i] = saved - perturbation;
    const double down = loss(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      fail(ErrorCode::kNumeric, "gradient_check: loss is not finite at coordinate " +
                                    std::to_string(i));
    const double numeric = (up - down) / (2.0 * perturbation);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

double gradient_check(const ScalarFn& loss, std::span<const double> params,
                      std::span<const double> analytic, double perturbation) {
  std::vector<std::size_t> all(params.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return gradient_check(loss, params, analytic, all, perturbation);
}

}  // namespace tgc
