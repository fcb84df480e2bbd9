// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tgc/captioner.hpp"
#include "tgc/predictor.hpp"

namespace tgc {

/// Concatenation of every parameter tensor in named_tensors() order.
std::vector<double> flatten(const CaptionModelParams& params);
void unflatten(std::span<const double> flat, CaptionModelParams& params);
std::vector<double> flatten(const MlpParams& params);
void unflatten(std::span<const double> flat, MlpParams& params);

/// IEEE binary128 (GCC and Clang on x86-64 and AArch64).
using Real128 = __float128;

/// Straightforward forward passes in quad precision. They share no code with
/// the training path and serve as the numeric side of gradient checks.
Real128 reference_kl_loss(const MlpParams& p, std::span<const double> x,
                          std::span<const double> target);
Real128 reference_cross_entropy(const MlpParams& p, std::span<const double> x,
                                std::size_t label);
Real128 reference_sequence_loss(const CaptionModelParams& p, std::span<const double> features,
                                std::span<const double> topics,
                                const std::vector<std::size_t>& targets);

/// Wraps a quad-precision loss as f(x) - f(x0) so that central
/// differences do not lose the small change to cancellation against the
/// loss value itself.
ScalarFn shifted_loss(std::function<Real128(std::span<const double>)> loss,
                      std::span<const double> x0);

struct GradcheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};

/// Central-difference checks of the KL loss, the cross-entropy loss and the
/// sequence loss of every decoder variant on small random models
/// (n_h = 8, V = 20, K = 3, n_f = 4).
std::vector<GradcheckEntry> gradient_suite(std::uint64_t seed);

}  // namespace tgc
