// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <json.hpp>

#include "tgc/error.hpp"

namespace tgc {

namespace {

constexpr std::size_t kMaxOrder = 4;

using NgramCounts = std::map<TokenSeq, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i)
    ++out[TokenSeq(s.begin() + static_cast<std::ptrdiff_t>(i),
                   s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

// Order-independent mean: sum in sorted order.
double stable_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

void check_pairs(const std::vector<EvalPair>& pairs, const char* metric) {
  if (pairs.empty()) fail(ErrorCode::kInvalidArgument, std::string(metric) + ": no hypotheses");
  for (const auto& p : pairs)
    if (p.references.empty())
      fail(ErrorCode::kInvalidArgument,
           std::string(metric) + ": video '" + p.video_id + "' has no references");
}

}  // namespace

double bleu4(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs, "bleu4");
  std::array<std::size_t, kMaxOrder> matched{}, total{};
  std::size_t hyp_len = 0, ref_len = 0;
  for (const auto& p : pairs) {
    const std::size_t c = p.hypothesis.size();
    hyp_len += c;
    std::size_t best = p.references.front().size();
    for (const auto& r : p.references) {
      const auto d = [c](std::size_t len) { return len > c ? len - c : c - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += best;
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto hyp = count_ngrams(p.hypothesis, n);
      NgramCounts max_ref;
      for (const auto& r : p.references)
        for (const auto& [g, cnt] : count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
      for (const auto& [g, cnt] : hyp) {
        total[n - 1] += cnt;
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(cnt, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp = hyp_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

double rouge_l_pair(const TokenSeq& hyp, const std::vector<TokenSeq>& refs) {
  if (hyp.empty()) return 0.0;
  double best = 0.0;
  std::vector<std::size_t> prev, cur;
  for (const auto& ref : refs) {
    if (ref.empty()) continue;
    prev.assign(ref.size() + 1, 0);
    cur.assign(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= hyp.size(); ++i) {
      for (std::size_t j = 1; j <= ref.size(); ++j)
        cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
      std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[ref.size()]);
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(hyp.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = kRougeBeta * kRougeBeta;
    best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
  }
  return best;
}

double rouge_l(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs, "rouge_l");
  std::vector<double> scores;
  for (const auto& p : pairs) scores.push_back(rouge_l_pair(p.hypothesis, p.references));
  return stable_mean(std::move(scores));
}

std::vector<double> cider_per_pair(const std::vector<EvalPair>& pairs) {
  check_pairs(pairs, "cider");
  std::map<TokenSeq, double> df;
  for (const auto& p : pairs) {
    std::set<TokenSeq> seen;
    for (const auto& r : p.references)
      for (std::size_t n = 1; n <= kMaxOrder; ++n)
        for (const auto& [g, cnt] : count_ngrams(r, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_docs = std::log(static_cast<double>(pairs.size()));

  using Vec = std::array<std::map<TokenSeq, double>, kMaxOrder>;
  auto vectorize = [&](const TokenSeq& s, std::array<double, kMaxOrder>& norms) {
    Vec v;
    norms.fill(0.0);
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      for (const auto& [g, cnt] : count_ngrams(s, n)) {
        const auto it = df.find(g);
        const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
        const double w = static_cast<double>(cnt) * (log_docs - d);
        v[n - 1][g] = w;
        norms[n - 1] += w * w;
      }
      norms[n - 1] = std::sqrt(norms[n - 1]);
    }
    return v;
  };

  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    std::array<double, kMaxOrder> hn{};
    const Vec hv = vectorize(p.hypothesis, hn);
    std::array<double, kMaxOrder> sum{};
    for (const auto& r : p.references) {
      std::array<double, kMaxOrder> rn{};
      const Vec rv = vectorize(r, rn);
      for (std::size_t n = 0; n < kMaxOrder; ++n) {
        if (hn[n] == 0.0 || rn[n] == 0.0) continue;
        double d = 0.0;
        for (const auto& [g, w] : hv[n]) {
          const auto it = rv[n].find(g);
          if (it != rv[n].end()) d += w * it->second;
        }
        sum[n] += d / (hn[n] * rn[n]);
      }
    }
    double mean = 0.0;
    for (double s : sum) mean += s;
    mean /= static_cast<double>(kMaxOrder);
    out.push_back(10.0 * mean / static_cast<double>(p.references.size()));
  }
  return out;
}

double cider(const std::vector<EvalPair>& pairs) { return stable_mean(cider_per_pair(pairs)); }

MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs) {
  MetricReport r;
  r.num_pairs = pairs.size();
  r.bleu4 = bleu4(pairs);
  r.rouge_l = rouge_l(pairs);
  const auto cider_scores = cider_per_pair(pairs);
  r.cider = stable_mean(cider_scores);
  std::set<std::string> words;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    words.insert(p.hypothesis.begin(), p.hypothesis.end());
    VideoScore v;
    v.video_id = p.video_id;
    for (const auto& t : p.hypothesis) v.hypothesis += (v.hypothesis.empty() ? "" : " ") + t;
    v.rouge_l = rouge_l_pair(p.hypothesis, p.references);
    v.cider = cider_scores[i];
    r.per_video.push_back(std::move(v));
  }
  r.unique_words = words.size();
  return r;
}

std::string report_to_json(const MetricReport& r, bool include_per_video) {
  nlohmann::ordered_json j;
  j["bleu4"] = r.bleu4;
  j["rouge_l"] = r.rouge_l;
  j["cider"] = r.cider;
  j["num_pairs"] = r.num_pairs;
  j["unique_words"] = r.unique_words;
  if (include_per_video) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& v : r.per_video) {
      nlohmann::ordered_json e;
      e["video_id"] = v.video_id;
      e["hypothesis"] = v.hypothesis;
      e["rouge_l"] = v.rouge_l;
      e["cider"] = v.cider;
      arr.push_back(std::move(e));
    }
    j["per_video"] = std::move(arr);
  }
  return j.dump(2);
}

std::string report_to_table(const MetricReport& r) {
  char buf[256];
  std::string out = "metric      score\n";
  std::snprintf(buf, sizeof buf, "BLEU@4      %.4f\nROUGE-L     %.4f\nCIDEr       %.4f\n", r.bleu4,
                r.rouge_l, r.cider);
  out += buf;
  std::snprintf(buf, sizeof buf, "videos      %zu\nvocabulary  %zu\n", r.num_pairs, r.unique_words);
  out += buf;
  return out;
}

}  // namespace tgc
