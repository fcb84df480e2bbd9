// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tgc/corpus.hpp"
#include "tgc/numerics.hpp"

namespace tgc {

using TopicDistribution = std::vector<double>;

struct GibbsSchedule {
  std::size_t iterations = 1000;
  std::size_t burn_in = 200;
  std::size_t thin = 20;  // keep every thin-th sweep after burn-in
};

struct LdaOptions {
  std::size_t topics = 20;
  double alpha = -1.0;  // < 0 selects 50 / topics
  double eta = 0.01;
  GibbsSchedule schedule;
  std::uint64_t seed = 1;
};

/// Collapsed Gibbs state of a fitted LDA model plus posterior means averaged
/// over the retained sweeps.
struct TopicModel {
  std::size_t num_topics = 0;
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double eta = 0.0;

  std::vector<std::string> doc_ids;
  std::vector<std::vector<std::size_t>> doc_words;   // token word ids per document
  std::vector<std::vector<std::size_t>> assignments; // topic per token

  Tensor topic_word;   // K x V counts
  Tensor doc_topic;    // D x K counts
  Tensor topic_total;  // K counts
  Tensor beta;         // K x V, rows on the simplex
  Tensor theta;        // D x K, rows on the simplex
  std::size_t retained_samples = 0;

  std::size_t num_docs() const { return doc_ids.size(); }
  std::unordered_map<std::string, std::size_t> doc_index;

  /// Row of theta for a training document; throws kNotFound otherwise.
  TopicDistribution document_theta(const std::string& doc_id) const;
};

/// (count_k + alpha) / (total + K alpha) for one document's topic counts.
TopicDistribution smoothed_theta(std::span<const double> topic_counts, double alpha);

double resolved_alpha(const LdaOptions& options);

/// Fits LDA by collapsed Gibbs sampling. Empty documents are kept (they get
/// the prior mean) but at least one document must be non-empty.
TopicModel lda_fit(const std::vector<std::string>& doc_ids, const std::vector<BagOfWords>& docs,
                   std::size_t vocab_size, const LdaOptions& options);

/// Rebuilds a model from persisted matrices (no token assignments).
TopicModel restore_topic_model(std::size_t num_topics, std::size_t vocab_size, double alpha,
                               double eta, std::vector<std::string> doc_ids, Tensor topic_word,
                               Tensor doc_topic, Tensor topic_total, Tensor beta, Tensor theta,
                               std::size_t retained_samples);

struct InferSchedule {
  std::size_t iterations = 200;
  std::size_t burn_in = 50;
  std::size_t thin = 5;
};

/// Fold-in Gibbs sampling for one new document with the topic-word side held
/// fixed at the fitted beta. Empty documents return the uniform distribution.
TopicDistribution lda_infer(const BagOfWords& doc, const TopicModel& model,
                            const InferSchedule& schedule, Rng& rng);

/// Posterior mean theta of a training video (the distillation target).
TopicDistribution teacher_distribution(const VideoRecord& video, const TopicModel& model);

/// Top n words of topic k by beta, ties broken by lower word index.
std::vector<std::size_t> top_words(const TopicModel& model, std::size_t topic, std::size_t n);

struct CooccurrenceTable {
  std::size_t num_topics = 0;
  std::size_t num_categories = 0;
  std::vector<std::vector<std::size_t>> counts;  // K x C
  std::vector<std::size_t> videos_per_topic;     // row sums
  std::vector<std::vector<double>> percent;      // row-normalized, in [0, 1]
};

/// Each categorized video votes for its argmax topic (lowest index on ties).
CooccurrenceTable topic_category_cooccurrence(const std::vector<const VideoRecord*>& records,
                                              const std::vector<TopicDistribution>& distributions,
                                              std::size_t num_categories = 20);
/// Uses the fitted posterior of each record; records outside the fit throw.
CooccurrenceTable topic_category_cooccurrence(const std::vector<const VideoRecord*>& records,
                                              const TopicModel& model,
                                              std::size_t num_categories = 20);

}  // namespace tgc
