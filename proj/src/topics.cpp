// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/topics.hpp"

#include <algorithm>
#include <numeric>

namespace tgc {

namespace {

bool retained(std::size_t sweep, std::size_t burn_in, std::size_t thin) {
  return sweep > burn_in && (sweep - burn_in) % thin == 0;
}

// Draws from unnormalized cumulative weights.
std::size_t draw_cumulative(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

}  // namespace

TopicDistribution TopicModel::document_theta(const std::string& doc_id) const {
  const auto it = doc_index.find(doc_id);
  if (it == doc_index.end())
    fail(ErrorCode::kNotFound, "video '" + doc_id + "' was not part of the topic model fit");
  const auto row = theta.row(it->second);
  return {row.begin(), row.end()};
}

TopicDistribution smoothed_theta(std::span<const double> topic_counts, double alpha) {
  const double total = std::accumulate(topic_counts.begin(), topic_counts.end(), 0.0);
  const double denom = total + static_cast<double>(topic_counts.size()) * alpha;
  TopicDistribution out(topic_counts.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (topic_counts[k] + alpha) / denom;
  return out;
}

double resolved_alpha(const LdaOptions& options) {
  return options.alpha < 0.0 ? 50.0 / static_cast<double>(options.topics) : options.alpha;
}

TopicModel lda_fit(const std::vector<std::string>& doc_ids, const std::vector<BagOfWords>& docs,
                   std::size_t vocab_size, const LdaOptions& options) {
  require(doc_ids.size() == docs.size(), "lda_fit: one id per document is required");
  require(options.topics >= 2, "lda_fit: at least two topics are required");
  require(options.eta > 0.0, "lda_fit: eta must be positive");
  require(options.schedule.thin >= 1, "lda_fit: thin must be at least 1");
  require(vocab_size > 0, "lda_fit: empty vocabulary");
  const bool any = std::any_of(docs.begin(), docs.end(), [](const auto& d) { return !d.empty(); });
  require(any, "lda_fit: every document is empty");

  const std::size_t K = options.topics;
  const std::size_t V = vocab_size;
  const std::size_t D = docs.size();

  TopicModel m;
  m.num_topics = K;
  m.vocab_size = V;
  m.alpha = resolved_alpha(options);
  m.eta = options.eta;
  require(m.alpha > 0.0, "lda_fit: alpha must be positive");
  m.doc_ids = doc_ids;
  for (std::size_t d = 0; d < D; ++d) {
    if (!m.doc_index.emplace(doc_ids[d], d).second)
      fail(ErrorCode::kInvalidArgument, "lda_fit: duplicate document id '" + doc_ids[d] + "'");
  }
  m.topic_word = Tensor::matrix(K, V);
  m.doc_topic = Tensor::matrix(D, K);
  m.topic_total = Tensor::vector(K);
  m.beta = Tensor::matrix(K, V);
  m.theta = Tensor::matrix(D, K);

  Rng rng(options.seed);
  m.doc_words.resize(D);
  m.assignments.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    m.doc_words[d] = docs[d].tokens();
    for (std::size_t w : m.doc_words[d]) {
      require(w < V, "lda_fit: word id outside the vocabulary");
      const std::size_t z = rng.below(K);
      m.assignments[d].push_back(z);
      m.topic_word(z, w) += 1.0;
      m.doc_topic(d, z) += 1.0;
      m.topic_total[z] += 1.0;
    }
  }

  const double v_eta = static_cast<double>(V) * m.eta;
  std::vector<double> cumulative(K);
  auto accumulate_sample = [&] {
    for (std::size_t k = 0; k < K; ++k) {
      const double denom = m.topic_total[k] + v_eta;
      for (std::size_t w = 0; w < V; ++w) m.beta(k, w) += (m.topic_word(k, w) + m.eta) / denom;
    }
    for (std::size_t d = 0; d < D; ++d) {
      const auto th = smoothed_theta(m.doc_topic.row(d), m.alpha);
      axpy(1.0, th, m.theta.row(d));
    }
    ++m.retained_samples;
  };

  const auto& sched = options.schedule;
  for (std::size_t sweep = 1; sweep <= sched.iterations; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      auto& words = m.doc_words[d];
      auto& zs = m.assignments[d];
      for (std::size_t i = 0; i < words.size(); ++i) {
        const std::size_t w = words[i];
        std::size_t z = zs[i];
        m.topic_word(z, w) -= 1.0;
        m.doc_topic(d, z) -= 1.0;
        m.topic_total[z] -= 1.0;
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          acc += (m.doc_topic(d, k) + m.alpha) * (m.topic_word(k, w) + m.eta) /
                 (m.topic_total[k] + v_eta);
          cumulative[k] = acc;
        }
        z = draw_cumulative(cumulative, rng);
        zs[i] = z;
        m.topic_word(z, w) += 1.0;
        m.doc_topic(d, z) += 1.0;
        m.topic_total[z] += 1.0;
      }
    }
    if (retained(sweep, sched.burn_in, sched.thin)) accumulate_sample();
  }
  if (m.retained_samples == 0) accumulate_sample();

  const double scale = 1.0 / static_cast<double>(m.retained_samples);
  for (double& x : m.beta.values()) x *= scale;
  for (double& x : m.theta.values()) x *= scale;
  return m;
}

TopicModel restore_topic_model(std::size_t num_topics, std::size_t vocab_size, double alpha,
                               double eta, std::vector<std::string> doc_ids, Tensor topic_word,
                               Tensor doc_topic, Tensor topic_total, Tensor beta, Tensor theta,
                               std::size_t retained_samples) {
  const std::size_t D = doc_ids.size();
  auto check = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kFormat, std::string("topic model: ") + what);
  };
  check(num_topics >= 2 && vocab_size > 0, "bad dimensions");
  check(topic_word.shape() == std::vector<std::size_t>{num_topics, vocab_size}, "topic_word shape");
  check(beta.shape() == std::vector<std::size_t>{num_topics, vocab_size}, "beta shape");
  check(topic_total.shape() == std::vector<std::size_t>{num_topics}, "topic_total shape");
  check(D == 0 || doc_topic.shape() == std::vector<std::size_t>{D, num_topics}, "doc_topic shape");
  check(D == 0 || theta.shape() == std::vector<std::size_t>{D, num_topics}, "theta shape");
  TopicModel m;
  m.num_topics = num_topics;
  m.vocab_size = vocab_size;
  m.alpha = alpha;
  m.eta = eta;
  m.doc_ids = std::move(doc_ids);
  for (std::size_t d = 0; d < D; ++d) m.doc_index.emplace(m.doc_ids[d], d);
  m.topic_word = std::move(topic_word);
  m.doc_topic = std::move(doc_topic);
  m.topic_total = std::move(topic_total);
  m.beta = std::move(beta);
  m.theta = std::move(theta);
  m.retained_samples = retained_samples;
  return m;
}

TopicDistribution lda_infer(const BagOfWords& doc, const TopicModel& model,
                            const InferSchedule& schedule, Rng& rng) {
  const std::size_t K = model.num_topics;
  require(K >= 2, "lda_infer: model is not fitted");
  require(schedule.thin >= 1, "lda_infer: thin must be at least 1");
  if (doc.empty()) return TopicDistribution(K, 1.0 / static_cast<double>(K));

  const auto words = doc.tokens();
  std::vector<std::size_t> zs(words.size());
  std::vector<double> counts(K, 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    require(words[i] < model.vocab_size, "lda_infer: word id outside the vocabulary");
    zs[i] = rng.below(K);
    counts[zs[i]] += 1.0;
  }

  TopicDistribution mean(K, 0.0);
  std::size_t samples = 0;
  std::vector<double> cumulative(K);
  for (std::size_t sweep = 1; sweep <= schedule.iterations; ++sweep) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      counts[zs[i]] -= 1.0;
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        acc += (counts[k] + model.alpha) * model.beta(k, words[i]);
        cumulative[k] = acc;
      }
      zs[i] = draw_cumulative(cumulative, rng);
      counts[zs[i]] += 1.0;
    }
    if (retained(sweep, schedule.burn_in, schedule.thin)) {
      axpy(1.0, smoothed_theta(counts, model.alpha), mean);
      ++samples;
    }
  }
  if (samples == 0) return smoothed_theta(counts, model.alpha);
  for (double& x : mean) x /= static_cast<double>(samples);
  return mean;
}

TopicDistribution teacher_distribution(const VideoRecord& video, const TopicModel& model) {
  return model.document_theta(video.video_id);
}

std::vector<std::size_t> top_words(const TopicModel& model, std::size_t topic, std::size_t n) {
  require(topic < model.num_topics, "top_words: topic index out of range");
  std::vector<std::size_t> order(model.vocab_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto row = model.beta.row(topic);
  n = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return row[a] != row[b] ? row[a] > row[b] : a < b;
                    });
  order.resize(n);
  return order;
}

CooccurrenceTable topic_category_cooccurrence(const std::vector<const VideoRecord*>& records,
                                              const std::vector<TopicDistribution>& distributions,
                                              std::size_t num_categories) {
  require(records.size() == distributions.size(),
          "cooccurrence: one topic distribution per record is required");
  require(!distributions.empty(), "cooccurrence: no videos");
  const std::size_t K = distributions.front().size();
  CooccurrenceTable t;
  t.num_topics = K;
  t.num_categories = num_categories;
  t.counts.assign(K, std::vector<std::size_t>(num_categories, 0));
  t.videos_per_topic.assign(K, 0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i]->category) continue;
    const auto c = static_cast<std::size_t>(*records[i]->category);
    require(c < num_categories, "cooccurrence: category outside the table");
    require(distributions[i].size() == K, "cooccurrence: inconsistent topic counts");
    const std::size_t k = argmax(distributions[i]);
    ++t.counts[k][c];
    ++t.videos_per_topic[k];
    ++used;
  }
  require(used > 0, "cooccurrence: no categorized videos");
  t.percent.assign(K, std::vector<double>(num_categories, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    if (t.videos_per_topic[k] == 0) continue;
    for (std::size_t c = 0; c < num_categories; ++c)
      t.percent[k][c] =
          static_cast<double>(t.counts[k][c]) / static_cast<double>(t.videos_per_topic[k]);
  }
  return t;
}

CooccurrenceTable topic_category_cooccurrence(const std::vector<const VideoRecord*>& records,
                                              const TopicModel& model,
                                              std::size_t num_categories) {
  std::vector<TopicDistribution> dists;
  dists.reserve(records.size());
  for (const auto* r : records) dists.push_back(model.document_theta(r->video_id));
  return topic_category_cooccurrence(records, dists, num_categories);
}

}  // namespace tgc
