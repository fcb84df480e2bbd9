// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tgc/numerics.hpp"

namespace tgc {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

/// Ordered (modality, dimension) list. Feature vectors are always laid out in
/// this order.
class FeatureManifest {
 public:
  FeatureManifest() = default;
  explicit FeatureManifest(std::vector<std::pair<std::string, std::size_t>> entries);

  const std::vector<std::pair<std::string, std::size_t>>& entries() const { return entries_; }
  std::size_t total_dim() const;
  std::optional<std::size_t> dimension(std::string_view name) const;

  /// Parses `{"modality": dimension, ...}` keeping key order.
  static FeatureManifest from_json_text(std::string_view text);
  static FeatureManifest load(const std::string& path);
  std::string to_json_text() const;
  void save(const std::string& path) const;

  friend bool operator==(const FeatureManifest&, const FeatureManifest&) = default;

 private:
  std::vector<std::pair<std::string, std::size_t>> entries_;
};

struct VideoRecord {
  std::string video_id;
  Split split = Split::kTrain;
  std::optional<int> category;
  std::vector<std::string> captions;
  // Absent modalities are simply missing from the map.
  std::map<std::string, std::vector<double>> features;
  std::optional<std::string> speech;
};

/// Lowercase, replace ASCII punctuation with spaces, split on whitespace.
/// Bytes outside ASCII pass through untouched.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::size_t kBos = 0;
  static constexpr std::size_t kEos = 1;
  static constexpr std::size_t kUnk = 2;
  static constexpr std::string_view kBosToken = "<bos>";
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kUnkToken = "<unk>";

  /// Only the reserved tokens.
  Vocabulary();

  /// Keeps every caption token of the train split occurring at least
  /// `min_count` times. Ordered by descending count, then lexicographically.
  static Vocabulary build(const std::vector<VideoRecord>& records, std::size_t min_count = 3);
  /// Same rule applied to an already tokenized stream.
  static Vocabulary from_token_stream(const std::vector<std::vector<std::string>>& sentences,
                                      std::size_t min_count = 3);
  /// Restores a vocabulary from its index->token list (reserved tokens first).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t index(std::string_view token) const;  // kUnk when unknown
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t i) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  /// Joins tokens with spaces, dropping reserved ones.
  std::string decode(const std::vector<std::size_t>& ids) const;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct BagOfWords {
  std::map<std::size_t, std::size_t> counts;

  std::size_t total() const;
  bool empty() const { return counts.empty(); }
  /// Expanded token list in ascending word order.
  std::vector<std::size_t> tokens() const;
};

using StopwordSet = std::unordered_set<std::string>;

/// The built-in English list (about 150 entries).
const StopwordSet& default_stopwords();
/// One token per line; blank lines and surrounding whitespace ignored.
StopwordSet load_stopwords(const std::string& path);

BagOfWords to_bag_of_words(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                           const StopwordSet& stopwords);

/// All captions of a video concatenated into one bag.
BagOfWords video_document(const VideoRecord& video, const Vocabulary& vocab,
                          const StopwordSet& stopwords);

inline constexpr std::size_t kMinSpeechTokens = 10;

/// Drops out-of-vocabulary tokens; a transcript with fewer than ten survivors
/// counts as no speech at all.
std::optional<std::vector<std::string>> clean_speech(std::string_view transcript,
                                                     const Vocabulary& vocab);

// ----------------------------------------------------------------------------
// JSON Lines corpus files
// ----------------------------------------------------------------------------

VideoRecord record_from_json_text(std::string_view line, const FeatureManifest& manifest);
std::string record_to_json_text(const VideoRecord& record);
std::vector<VideoRecord> load_corpus(const std::string& path, const FeatureManifest& manifest);
void save_corpus(const std::string& path, const std::vector<VideoRecord>& records);

std::vector<const VideoRecord*> select_split(const std::vector<VideoRecord>& records, Split split);

// ----------------------------------------------------------------------------
// Synthetic corpora
// ----------------------------------------------------------------------------

enum class CaptionStyle {
  kBag,       // every token drawn independently from a topic picked from the mixture
  kTemplate,  // every caption is one of a few fixed sentences of a topic picked from the mixture
};

struct SyntheticOptions {
  std::size_t topics = 3;
  std::size_t vocab_size = 150;  // split into `topics` disjoint blocks
  std::size_t videos_per_topic = 100;
  std::size_t captions_per_video = 20;
  std::size_t caption_length = 8;
  CaptionStyle style = CaptionStyle::kBag;
  std::size_t templates_per_topic = 3;
  double zipf_exponent = 1.1;   // word weights inside a block
  double dominance = 0.6;       // mass of the dominant topic in each mixture
  double mixture_concentration = 0.3;
  double feature_noise = 0.05;
  std::size_t motion_dim = 0;  // 0 means 2 * topics
  double aural_rate = 0.8;
  double speech_rate = 0.5;
  std::size_t speech_length = 16;
  std::size_t speech_oov = 3;
  double category_noise = 0.0;
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<VideoRecord> records;
  FeatureManifest manifest;
  std::vector<std::vector<double>> mixtures;      // per video
  std::vector<std::size_t> dominant;              // per video
  std::vector<std::vector<std::string>> blocks;   // per topic, words in weight order
  std::vector<std::vector<double>> block_weights; // per topic, aligned with blocks
  std::vector<std::vector<std::vector<std::string>>> templates;  // kTemplate only
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticOptions& options);

}  // namespace tgc
