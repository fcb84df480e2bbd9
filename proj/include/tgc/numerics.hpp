// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "tgc/error.hpp"

namespace tgc {

// ----------------------------------------------------------------------------
// Tensor
// ----------------------------------------------------------------------------

/// Dense row-major array of doubles. Vectors have rank 1, matrices rank 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// y += A x
void matvec_add(const Tensor& a, std::span<const double> x, std::span<double> y);
// y += A^T x
void matvec_t_add(const Tensor& a, std::span<const double> x, std::span<double> y);
// A += u v^T
void outer_add(Tensor& a, std::span<const double> u, std::span<const double> v);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ----------------------------------------------------------------------------
// Probability helpers
// ----------------------------------------------------------------------------

/// Max-subtracted softmax. Throws kNumeric on non-finite input.
std::vector<double> softmax(std::span<const double> logits);
Tensor softmax(const Tensor& logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

bool on_simplex(std::span<const double> p, double tol);

// ----------------------------------------------------------------------------
// Random numbers
// ----------------------------------------------------------------------------

/// Seeded generator. The engine is std::mt19937_64, whose output sequence is
/// fixed by the standard; every distribution below is computed here rather
/// than through <random> distributions, whose algorithms vary by vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), rejection sampled.
  std::size_t below(std::size_t n);
  /// Standard normal by Box-Muller (one value per call, no caching).
  double normal();
  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape);
  std::vector<double> dirichlet(std::span<const double> concentration);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; derives independent stream seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Draws i with probability probs[i] / sum(probs).
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

// ----------------------------------------------------------------------------
// Optimization
// ----------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(const Tensor& like, AdamConfig cfg)
      : m(like.shape()), v(like.shape()), config(cfg) {}
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state);

/// Scales every gradient tensor so the joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Tensor* const> grads, double max_norm);

// ----------------------------------------------------------------------------
// Gradient verification
// ----------------------------------------------------------------------------

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences at every coordinate of `params`; returns
/// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double gradient_check(const ScalarFn& loss, std::span<const double> params,
                      std::span<const double> analytic, double perturbation = 1e-6);

/// Same, restricted to the given coordinates.
double gradient_check(const ScalarFn& loss, std::span<const double> params,
                      std::span<const double> analytic, std::span<const std::size_t> coords,
                      double perturbation = 1e-6);

}  // namespace tgc
