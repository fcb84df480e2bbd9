// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tgc/captioner.hpp"
#include "tgc/checkpoint.hpp"
#include "tgc/corpus.hpp"
#include "tgc/metrics.hpp"
#include "tgc/predictor.hpp"
#include "tgc/topics.hpp"

namespace tgc {

/// Settings for every command, stored as a JSON document whose shape is fixed
/// by the defaults: merging a file or setting a key fails on unknown keys,
/// type changes and out-of-range values.
///
///   seed                    global seed
///   workers                 0 = read TGC_WORKERS, else 1
///   paths.*                 corpus, manifest, stopwords, topic_model,
///                           predictor, predictions, topics_file, captioner,
///                           captions, report, truth_topics, output_dir
///   vocab.min_count         3
///   topics.*                K, alpha (<= 0 means 50 / K), eta, iterations,
///                           burn_in, thin, infer_*, show_words, num_categories
///   predictor.*             hidden, epochs, batch_size, learning_rate,
///                           category_classifier
///   captioner.*             variant, topic_source, hidden, factors,
///                           beam_width, max_length, epochs, batch_size,
///                           learning_rate, dropout, clip_norm,
///                           category_one_hot, split
///   synth.*                 synthetic corpus shape
///   ablate.k_list           topic counts swept by ablate-topics
class PipelineConfig {
 public:
  PipelineConfig();

  static const nlohmann::json& defaults();
  static PipelineConfig load(const std::string& path);

  /// Overlays a JSON object onto the current values.
  void merge_json_text(std::string_view text);
  /// Sets one dotted key. The value is parsed as JSON when possible and taken
  /// as a plain string otherwise.
  void set(std::string_view dotted_key, std::string_view value);

  /// Checks rules that span several keys (burn-in below iterations, split
  /// fractions). Setting keys one at a time only checks each key alone.
  void check() const;

  const nlohmann::json& values() const { return values_; }
  std::string to_json_text() const { return values_.dump(2); }

  template <class T>
  T get(std::string_view dotted_key) const {
    return lookup(dotted_key).get<T>();
  }
  std::string path(std::string_view name) const { return get<std::string>("paths." + std::string(name)); }

 private:
  const nlohmann::json& lookup(std::string_view dotted_key) const;
  void validate(bool cross_field) const;

  nlohmann::json values_;
};

/// Worker count: the config value when positive, else TGC_WORKERS, else 1.
std::size_t resolve_workers(const PipelineConfig& config);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// ----------------------------------------------------------------------------
// Per-video topic files
// ----------------------------------------------------------------------------

/// One JSON object per line: {"video_id", "topics": [...], "sources": [...]}.
/// `sources` is optional on input.
struct TopicRecord {
  std::string video_id;
  TopicDistribution topics;
  std::vector<std::string> sources;
};

std::vector<TopicRecord> load_topic_file(const std::string& path);
void save_topic_file(const std::string& path, const std::vector<TopicRecord>& rows);
std::map<std::string, TopicDistribution> topic_map(const std::vector<TopicRecord>& rows);

// ----------------------------------------------------------------------------
// Generated captions
// ----------------------------------------------------------------------------

struct GeneratedCaption {
  std::string video_id;
  std::string caption;
  double log_prob = 0.0;
  std::string variant;
};

std::vector<GeneratedCaption> load_captions(const std::string& path);
void save_captions(const std::string& path, const std::vector<GeneratedCaption>& rows);

// ----------------------------------------------------------------------------
// Stages
// ----------------------------------------------------------------------------

struct LoadedCorpus {
  FeatureManifest manifest;
  std::vector<VideoRecord> records;
};

LoadedCorpus load_pipeline_corpus(const PipelineConfig& config);
StopwordSet pipeline_stopwords(const PipelineConfig& config);

TopicBundle mine_topics(const std::vector<VideoRecord>& records, const PipelineConfig& config);

PredictorBundle train_predictors(const std::vector<VideoRecord>& records,
                                 const FeatureManifest& manifest, const TopicBundle& topics,
                                 const PipelineConfig& config);

/// General, speech and ensembled topics for every record, in record order.
std::vector<TopicRecord> predict_topics(const std::vector<VideoRecord>& records,
                                        const TopicBundle& topics, const PredictorBundle& predictor,
                                        const PipelineConfig& config);

/// Where captioner topics come from. Each source fills in the records it can
/// serve; lookups for anything else fail with kNotFound.
struct TopicInputs {
  const TopicBundle* topics = nullptr;          // teacher
  const PredictorBundle* predictor = nullptr;   // category
  std::map<std::string, TopicDistribution> predicted;
  std::map<std::string, TopicDistribution> annotated;
};

/// Topic vectors for `records` under `source` (teacher, predicted, annotated,
/// category); empty vectors for the vanilla variant.
std::vector<TopicDistribution> captioner_topics(const std::vector<const VideoRecord*>& records,
                                                std::string_view source, Variant variant,
                                                const TopicInputs& inputs,
                                                const FeatureManifest& manifest,
                                                bool category_one_hot);

/// Trains a captioner on the train split. `source` is the topic source used
/// during training; it is stored in the checkpoint.
CaptionerBundle train_captioner_stage(const std::vector<VideoRecord>& records,
                                      const FeatureManifest& manifest, const TopicInputs& inputs,
                                      const PipelineConfig& config,
                                      std::vector<double>* epoch_losses = nullptr);

/// Beam-search captions for `records`. At test time the teacher source reads
/// predicted topics because teachers exist only for fitted videos.
std::vector<GeneratedCaption> generate_captions(const CaptionerBundle& captioner,
                                                const std::vector<const VideoRecord*>& records,
                                                const TopicInputs& inputs,
                                                const PipelineConfig& config);

MetricReport evaluate_captions(const std::vector<GeneratedCaption>& captions,
                               const std::vector<VideoRecord>& records);

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

/// synth, mine-topics, show-topics, cooccurrence, train-predictor,
/// predict-topics, train-captioner, caption, evaluate, gradcheck,
/// ablate-topics.
const std::vector<std::string>& command_names();

/// Runs one command. Artifacts go to the configured paths; the returned text
/// is the human-readable summary.
std::string run_command(std::string_view name, const PipelineConfig& config);

}  // namespace tgc
