// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tgc {

MlpParams MlpParams::zeros_like() const {
  return {Tensor(w1.shape()), Tensor(b1.shape()), Tensor(w2.shape()), Tensor(b2.shape())};
}

MlpParams init_mlp(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, Rng& rng) {
  require(input_dim > 0 && hidden_dim > 0 && output_dim > 0, "MLP dimensions must be positive");
  MlpParams p{Tensor::matrix(hidden_dim, input_dim), Tensor::vector(hidden_dim),
              Tensor::matrix(output_dim, hidden_dim), Tensor::vector(output_dim)};
  for (double& x : p.w1.values()) x = rng.uniform(-0.08, 0.08);
  for (double& x : p.w2.values()) x = rng.uniform(-0.08, 0.08);
  return p;
}

MlpActivations mlp_forward(const MlpParams& p, std::span<const double> x) {
  require(x.size() == p.input_dim(), "MLP input has " + std::to_string(x.size()) +
                                         " values, expected " + std::to_string(p.input_dim()));
  MlpActivations a;
  a.hidden.assign(p.b1.values().begin(), p.b1.values().end());
  matvec_add(p.w1, x, a.hidden);
  for (double& h : a.hidden) h = std::tanh(h);
  a.logits.assign(p.b2.values().begin(), p.b2.values().end());
  matvec_add(p.w2, a.hidden, a.logits);
  a.probs = softmax(a.logits);
  return a;
}

void mlp_backward(const MlpParams& p, std::span<const double> x, const MlpActivations& a,
                  std::span<const double> dlogits, MlpParams& g) {
  outer_add(g.w2, dlogits, a.hidden);
  axpy(1.0, dlogits, g.b2.values());
  std::vector<double> dh(p.hidden_dim(), 0.0);
  matvec_t_add(p.w2, dlogits, dh);
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= 1.0 - a.hidden[i] * a.hidden[i];
  outer_add(g.w1, dh, x);
  axpy(1.0, dh, g.b1.values());
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "kl_divergence: length mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    total += p[k] * (std::log(p[k]) - std::log(std::max(q[k], kKlFloor)));
  }
  return total;
}

double kl_loss(const MlpParams& p, std::span<const double> x, std::span<const double> target,
               MlpParams* grads, double scale) {
  require(target.size() == p.output_dim(), "kl_loss: target has the wrong number of topics");
  const auto act = mlp_forward(p, x);
  const auto logq = log_softmax(act.logits);
  double loss = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] <= 0.0) continue;
    loss += target[k] * (std::log(target[k]) - std::max(logq[k], std::log(kKlFloor)));
    mass += target[k];
  }
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "KL loss is not finite");
  if (grads) {
    std::vector<double> d(target.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = scale * (act.probs[k] * mass - target[k]);
    mlp_backward(p, x, act, d, *grads);
  }
  return loss;
}

double cross_entropy_loss(const MlpParams& p, std::span<const double> x, std::size_t label,
                          MlpParams* grads, double scale) {
  require(label < p.output_dim(), "cross_entropy_loss: label out of range");
  const auto act = mlp_forward(p, x);
  const double loss = -log_softmax(act.logits)[label];
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "cross-entropy loss is not finite");
  if (grads) {
    std::vector<double> d(act.probs);
    d[label] -= 1.0;
    for (double& v : d) v *= scale;
    mlp_backward(p, x, act, d, *grads);
  }
  return loss;
}

std::vector<double> assemble_features(const VideoRecord& video, const FeatureManifest& manifest) {
  std::vector<double> out;
  out.reserve(manifest.total_dim());
  for (const auto& [name, dim] : manifest.entries()) {
    const auto it = video.features.find(name);
    if (it == video.features.end()) {
      out.insert(out.end(), dim, 0.0);
      continue;
    }
    if (it->second.size() != dim)
      fail(ErrorCode::kInvalidArgument, "video '" + video.video_id + "': modality '" + name +
                                            "' has " + std::to_string(it->second.size()) +
                                            " values, expected " + std::to_string(dim));
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

namespace {

template <class LossFn>
PredictorTrainResult train_mlp(std::size_t n, std::size_t input_dim, std::size_t output_dim,
                               const PredictorTrainOptions& o, LossFn&& loss) {
  require(n > 0, "no training samples");
  require(o.batch_size > 0, "batch size must be positive");
  Rng rng(o.seed);
  PredictorTrainResult r;
  r.params = init_mlp(input_dim, o.hidden, output_dim, rng);
  auto tensors = r.params.tensors();
  std::vector<AdamState> adam;
  for (Tensor* t : tensors) adam.emplace_back(*t, o.adam);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += o.batch_size) {
      const std::size_t end = std::min(n, start + o.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      MlpParams grads = r.params.zeros_like();
      for (std::size_t b = start; b < end; ++b) total += loss(r.params, order[b], &grads, scale);
      auto gt = grads.tensors();
      for (std::size_t i = 0; i < tensors.size(); ++i) adam_step(*tensors[i], *gt[i], adam[i]);
    }
    const double mean = total / static_cast<double>(n);
    if (!std::isfinite(mean))
      fail(ErrorCode::kNumeric, "predictor training diverged at epoch " + std::to_string(epoch));
    r.epoch_losses.push_back(mean);
  }
  return r;
}

}  // namespace

PredictorTrainResult train_general_predictor(const std::vector<std::vector<double>>& features,
                                             const std::vector<TopicDistribution>& teachers,
                                             const PredictorTrainOptions& options) {
  require(features.size() == teachers.size(), "one teacher distribution per video is required");
  require(!features.empty(), "no training videos for the topic predictor");
  const std::size_t dim = features.front().size();
  const std::size_t K = teachers.front().size();
  for (std::size_t i = 0; i < features.size(); ++i)
    require(features[i].size() == dim && teachers[i].size() == K,
            "inconsistent predictor training dimensions");
  return train_mlp(features.size(), dim, K, options,
                   [&](const MlpParams& p, std::size_t i, MlpParams* g, double s) {
                     return kl_loss(p, features[i], teachers[i], g, s);
                   });
}

PredictorTrainResult train_general_predictor(const std::vector<const VideoRecord*>& records,
                                             const FeatureManifest& manifest,
                                             const TopicModel& teacher,
                                             const PredictorTrainOptions& options) {
  std::vector<std::vector<double>> x;
  std::vector<TopicDistribution> t;
  for (const auto* r : records) {
    x.push_back(assemble_features(*r, manifest));
    t.push_back(teacher_distribution(*r, teacher));
  }
  return train_general_predictor(x, t, options);
}

TopicDistribution predict_general(std::span<const double> features, const MlpParams& params) {
  return mlp_forward(params, features).probs;
}

TopicDistribution predict_general(const VideoRecord& video, const FeatureManifest& manifest,
                                  const MlpParams& params) {
  return predict_general(assemble_features(video, manifest), params);
}

std::optional<TopicDistribution> predict_speech(const VideoRecord& video, const TopicModel& model,
                                                const Vocabulary& vocab,
                                                const StopwordSet& stopwords,
                                                const InferSchedule& schedule, Rng& rng) {
  if (!video.speech) return std::nullopt;
  const auto cleaned = clean_speech(*video.speech, vocab);
  if (!cleaned) return std::nullopt;
  return lda_infer(to_bag_of_words(*cleaned, vocab, stopwords), model, schedule, rng);
}

TopicPrediction ensemble(const TopicDistribution& general,
                         const std::optional<TopicDistribution>& speech) {
  TopicPrediction out;
  out.distribution = general;
  out.sources = {TopicSource::kGeneral};
  if (speech) {
    require(speech->size() == general.size(), "ensemble: topic counts differ");
    for (std::size_t k = 0; k < general.size(); ++k)
      out.distribution[k] = 0.5 * (general[k] + (*speech)[k]);
    out.sources.push_back(TopicSource::kSpeech);
  }
  return out;
}

PredictorTrainResult train_category_classifier(const std::vector<std::vector<double>>& features,
                                               const std::vector<std::size_t>& labels,
                                               std::size_t num_categories,
                                               const PredictorTrainOptions& options) {
  require(features.size() == labels.size(), "one label per video is required");
  require(!features.empty(), "no training videos for the category classifier");
  require(num_categories >= 2, "the category classifier needs at least two classes");
  for (std::size_t l : labels) require(l < num_categories, "category label out of range");
  return train_mlp(features.size(), features.front().size(), num_categories, options,
                   [&](const MlpParams& p, std::size_t i, MlpParams* g, double s) {
                     return cross_entropy_loss(p, features[i], labels[i], g, s);
                   });
}

PredictorTrainResult train_category_classifier(const std::vector<const VideoRecord*>& records,
                                               const FeatureManifest& manifest,
                                               std::size_t num_categories,
                                               const PredictorTrainOptions& options) {
  std::vector<std::vector<double>> x;
  std::vector<std::size_t> y;
  for (const auto* r : records) {
    if (!r->category) fail(ErrorCode::kInvalidArgument, "video '" + r->video_id + "' has no category");
    x.push_back(assemble_features(*r, manifest));
    y.push_back(static_cast<std::size_t>(*r->category));
  }
  return train_category_classifier(x, y, num_categories, options);
}

std::vector<double> predict_category(std::span<const double> features, const MlpParams& params,
                                     bool one_hot) {
  auto probs = mlp_forward(params, features).probs;
  if (!one_hot) return probs;
  std::vector<double> out(probs.size(), 0.0);
  out[argmax(probs)] = 1.0;
  return out;
}

}  // namespace tgc
