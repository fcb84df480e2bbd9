// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tgc {

using TokenSeq = std::vector<std::string>;

struct EvalPair {
  std::string video_id;
  TokenSeq hypothesis;
  std::vector<TokenSeq> references;
};

/// Corpus BLEU with n = 1..4: clipped counts summed over the corpus, uniform
/// geometric mean, brevity penalty against the closest reference length
/// (shorter reference on ties). No smoothing.
double bleu4(const std::vector<EvalPair>& pairs);

inline constexpr double kRougeBeta = 1.2;

/// LCS F-measure of one hypothesis, maximized over references.
double rouge_l_pair(const TokenSeq& hypothesis, const std::vector<TokenSeq>& references);
/// Mean of rouge_l_pair over the corpus.
double rouge_l(const std::vector<EvalPair>& pairs);

/// Consensus-based TF-IDF n-gram cosine score (n = 1..4, factor 10, no length
/// penalty). Document frequencies count each video's reference set once.
std::vector<double> cider_per_pair(const std::vector<EvalPair>& pairs);
double cider(const std::vector<EvalPair>& pairs);

struct VideoScore {
  std::string video_id;
  std::string hypothesis;
  double rouge_l = 0.0;
  double cider = 0.0;
};

struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t num_pairs = 0;
  std::size_t unique_words = 0;  // distinct hypothesis tokens
  std::vector<VideoScore> per_video;
};

MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs);
std::string report_to_json(const MetricReport& report, bool include_per_video = true);
std::string report_to_table(const MetricReport& report);

}  // namespace tgc
