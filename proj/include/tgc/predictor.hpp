// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tgc/corpus.hpp"
#include "tgc/numerics.hpp"
#include "tgc/topics.hpp"

namespace tgc {

/// One hidden tanh layer followed by a softmax output.
struct MlpParams {
  Tensor w1;  // hidden x input
  Tensor b1;  // hidden
  Tensor w2;  // output x hidden
  Tensor b2;  // output

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t output_dim() const { return w2.rows(); }

  /// Zeroed tensors with the same shapes.
  MlpParams zeros_like() const;
  std::vector<Tensor*> tensors() { return {&w1, &b1, &w2, &b2}; }
  std::vector<const Tensor*> tensors() const { return {&w1, &b1, &w2, &b2}; }
};

/// Weights uniform in [-0.08, 0.08], biases zero.
MlpParams init_mlp(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, Rng& rng);

struct MlpActivations {
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> probs;
};

MlpActivations mlp_forward(const MlpParams& p, std::span<const double> x);
/// Accumulates parameter gradients for a given d(loss)/d(logits).
void mlp_backward(const MlpParams& p, std::span<const double> x, const MlpActivations& act,
                  std::span<const double> dlogits, MlpParams& grads);

inline constexpr double kKlFloor = 1e-12;

/// sum_k P_k log(P_k / max(Q_k, 1e-12)); terms with P_k = 0 are zero.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// KL(target || softmax(net(x))); adds scale * gradient into grads when given.
double kl_loss(const MlpParams& p, std::span<const double> x, std::span<const double> target,
               MlpParams* grads = nullptr, double scale = 1.0);
/// -log softmax(net(x))[label]; adds scale * gradient into grads when given.
double cross_entropy_loss(const MlpParams& p, std::span<const double> x, std::size_t label,
                          MlpParams* grads = nullptr, double scale = 1.0);

/// Concatenates modalities in manifest order; absent ones become zeros.
std::vector<double> assemble_features(const VideoRecord& video, const FeatureManifest& manifest);

struct PredictorTrainOptions {
  std::size_t hidden = 512;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct PredictorTrainResult {
  MlpParams params;
  std::vector<double> epoch_losses;  // mean loss over each epoch's samples
};

/// Distills teacher distributions into the MLP by minimizing mean KL.
PredictorTrainResult train_general_predictor(const std::vector<std::vector<double>>& features,
                                             const std::vector<TopicDistribution>& teachers,
                                             const PredictorTrainOptions& options);
PredictorTrainResult train_general_predictor(const std::vector<const VideoRecord*>& records,
                                             const FeatureManifest& manifest,
                                             const TopicModel& teacher,
                                             const PredictorTrainOptions& options);

TopicDistribution predict_general(std::span<const double> features, const MlpParams& params);
TopicDistribution predict_general(const VideoRecord& video, const FeatureManifest& manifest,
                                  const MlpParams& params);

/// Fold-in inference on the cleaned transcript; absent when no usable speech.
std::optional<TopicDistribution> predict_speech(const VideoRecord& video, const TopicModel& model,
                                                const Vocabulary& vocab,
                                                const StopwordSet& stopwords,
                                                const InferSchedule& schedule, Rng& rng);

enum class TopicSource { kGeneral = 1, kSpeech = 2 };

struct TopicPrediction {
  TopicDistribution distribution;
  std::vector<TopicSource> sources;
};

/// Equal-weight mean of the available predictions.
TopicPrediction ensemble(const TopicDistribution& general,
                         const std::optional<TopicDistribution>& speech);

PredictorTrainResult train_category_classifier(const std::vector<std::vector<double>>& features,
                                               const std::vector<std::size_t>& labels,
                                               std::size_t num_categories,
                                               const PredictorTrainOptions& options);
/// Throws when a record lacks its category.
PredictorTrainResult train_category_classifier(const std::vector<const VideoRecord*>& records,
                                               const FeatureManifest& manifest,
                                               std::size_t num_categories,
                                               const PredictorTrainOptions& options);

/// Softmax over categories, or its argmax as a one-hot vector.
std::vector<double> predict_category(std::span<const double> features, const MlpParams& params,
                                     bool one_hot = false);

}  // namespace tgc
