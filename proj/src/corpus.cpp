// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tgc {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kFormat, "unknown split '" + std::string(name) + "'");
}

// ----------------------------------------------------------------------------

FeatureManifest::FeatureManifest(std::vector<std::pair<std::string, std::size_t>> entries)
    : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    require(!entries_[i].first.empty(), "manifest modality names must be non-empty");
    require(entries_[i].second > 0, "manifest dimension for '" + entries_[i].first +
                                        "' must be positive");
    for (std::size_t j = 0; j < i; ++j)
      require(entries_[j].first != entries_[i].first,
              "duplicate manifest modality '" + entries_[i].first + "'");
  }
}

std::size_t FeatureManifest::total_dim() const {
  std::size_t n = 0;
  for (const auto& [name, dim] : entries_) n += dim;
  return n;
}

std::optional<std::size_t> FeatureManifest::dimension(std::string_view name) const {
  for (const auto& [n, dim] : entries_)
    if (n == name) return dim;
  return std::nullopt;
}

FeatureManifest FeatureManifest::from_json_text(std::string_view text) {
  ordered_json j;
  std::vector<std::string> keys;
  const auto collect_keys = [&](int depth, ordered_json::parse_event_t event, ordered_json& parsed) {
    if (depth == 1 && event == ordered_json::parse_event_t::key) keys.push_back(parsed.get<std::string>());
    return true;
  };
  try {
    j = ordered_json::parse(text, collect_keys);
  } catch (const std::exception& e) {
    fail(ErrorCode::kFormat, std::string("manifest is not valid JSON: ") + e.what());
  }
  std::sort(keys.begin(), keys.end());
  if (const auto dup = std::adjacent_find(keys.begin(), keys.end()); dup != keys.end())
    fail(ErrorCode::kFormat, "manifest names modality '" + *dup + "' twice");
  if (!j.is_object()) fail(ErrorCode::kFormat, "manifest must be a JSON object");
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [name, dim] : j.items()) {
    if (!dim.is_number_integer() || dim.get<long long>() <= 0)
      fail(ErrorCode::kFormat, "manifest dimension for '" + name + "' must be a positive integer");
    entries.emplace_back(name, dim.get<std::size_t>());
  }
  try {
    return FeatureManifest(std::move(entries));
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, e.what());
  }
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

}  // namespace

FeatureManifest FeatureManifest::load(const std::string& path) {
  return from_json_text(read_file(path));
}

std::string FeatureManifest::to_json_text() const {
  ordered_json j = ordered_json::object();
  for (const auto& [name, dim] : entries_) j[name] = dim;
  return j.dump();
}

void FeatureManifest::save(const std::string& path) const { write_file(path, to_json_text() + "\n"); }

// ----------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && (std::isspace(u) || std::ispunct(u))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ----------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kBosToken));
  add(std::string(kEosToken));
  add(std::string(kUnkToken));
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::from_token_stream(const std::vector<std::vector<std::string>>& sentences,
                                         std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& t : s) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, n] : kept)
    if (!v.contains(tok)) v.add(tok);
  return v;
}

Vocabulary Vocabulary::build(const std::vector<VideoRecord>& records, std::size_t min_count) {
  std::vector<std::vector<std::string>> sentences;
  bool any_train = false;
  for (const auto& r : records) {
    if (r.split != Split::kTrain) continue;
    any_train = true;
    for (const auto& c : r.captions) sentences.push_back(tokenize(c));
  }
  require(any_train, "cannot build a vocabulary without training videos");
  return from_token_stream(sentences, min_count);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[kBos] != kBosToken || tokens[kEos] != kEosToken ||
      tokens[kUnk] != kUnkToken)
    fail(ErrorCode::kFormat, "vocabulary must start with <bos>, <eos>, <unk>");
  Vocabulary v;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) fail(ErrorCode::kFormat, "duplicate vocabulary token '" + tokens[i] + "'");
    v.add(std::move(tokens[i]));
  }
  return v;
}

std::size_t Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

const std::string& Vocabulary::token(std::size_t i) const {
  require(i < tokens_.size(), "vocabulary index out of range");
  return tokens_[i];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

std::string Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

// ----------------------------------------------------------------------------

std::size_t BagOfWords::total() const {
  std::size_t n = 0;
  for (const auto& [w, c] : counts) n += c;
  return n;
}

std::vector<std::size_t> BagOfWords::tokens() const {
  std::vector<std::size_t> out;
  out.reserve(total());
  for (const auto& [w, c] : counts) out.insert(out.end(), c, w);
  return out;
}

const StopwordSet& default_stopwords() {
  static const StopwordSet words = {
      "a",       "about",   "above",  "after",   "again",  "against", "all",     "am",
      "an",      "and",     "any",    "are",     "as",     "at",      "be",      "because",
      "been",    "before",  "being",  "below",   "between", "both",   "but",     "by",
      "can",     "could",   "did",    "do",      "does",   "doing",   "down",    "during",
      "each",    "few",     "for",    "from",    "further", "had",    "has",     "have",
      "having",  "he",      "her",    "here",    "hers",   "herself", "him",     "himself",
      "his",     "how",     "i",      "if",      "in",     "into",    "is",      "it",
      "its",     "itself",  "just",   "me",      "more",   "most",    "my",      "myself",
      "no",      "nor",     "not",    "now",     "of",     "off",     "on",      "once",
      "only",    "or",      "other",  "our",     "ours",   "ourselves", "out",   "over",
      "own",     "same",    "she",    "should",  "so",     "some",    "such",    "than",
      "that",    "the",     "their",  "theirs",  "them",   "themselves", "then", "there",
      "these",   "they",    "this",   "those",   "through", "to",     "too",     "under",
      "until",   "up",      "very",   "was",     "we",     "were",    "what",    "when",
      "where",   "which",   "while",  "who",     "whom",   "why",     "will",    "with",
      "would",   "you",     "your",   "yours",   "yourself", "yourselves", "s", "t",
      "don",     "isn",     "aren",   "wasn",    "weren",  "won",     "ll",      "re",
      "ve",      "d",       "m",      "o",       "y",      "also",    "onto",    "upon",
      "another", "while",   "via",    "shall",   "may",    "might",   "must",    "let",
  };
  return words;
}

StopwordSet load_stopwords(const std::string& path) {
  std::istringstream in(read_file(path));
  StopwordSet out;
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

BagOfWords to_bag_of_words(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                           const StopwordSet& stopwords) {
  BagOfWords bag;
  for (const auto& t : tokens) {
    if (stopwords.contains(t)) continue;
    const std::size_t id = vocab.index(t);
    if (id == Vocabulary::kUnk || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    ++bag.counts[id];
  }
  return bag;
}

BagOfWords video_document(const VideoRecord& video, const Vocabulary& vocab,
                          const StopwordSet& stopwords) {
  std::vector<std::string> all;
  for (const auto& c : video.captions) {
    auto t = tokenize(c);
    all.insert(all.end(), t.begin(), t.end());
  }
  return to_bag_of_words(all, vocab, stopwords);
}

std::optional<std::vector<std::string>> clean_speech(std::string_view transcript,
                                                     const Vocabulary& vocab) {
  std::vector<std::string> kept;
  for (auto& t : tokenize(transcript)) {
    const std::size_t id = vocab.index(t);
    if (id == Vocabulary::kUnk || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    kept.push_back(std::move(t));
  }
  if (kept.size() < kMinSpeechTokens) return std::nullopt;
  return kept;
}

// ----------------------------------------------------------------------------

VideoRecord record_from_json_text(std::string_view line, const FeatureManifest& manifest) {
  json j;
  try {
    j = json::parse(line);
  } catch (const std::exception& e) {
    fail(ErrorCode::kFormat, std::string("corpus line is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kFormat, "corpus line must be a JSON object");
  VideoRecord r;
  try {
    r.video_id = j.at("video_id").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("category") && !j["category"].is_null()) {
      const int c = j["category"].get<int>();
      if (c < 0 || c >= 20)
        fail(ErrorCode::kFormat, "video '" + r.video_id + "': category must be in [0, 20)");
      r.category = c;
    }
    if (j.contains("captions")) r.captions = j["captions"].get<std::vector<std::string>>();
    if (j.contains("features")) {
      for (const auto& [name, vec] : j["features"].items()) {
        if (vec.is_null()) continue;
        const auto dim = manifest.dimension(name);
        if (!dim)
          fail(ErrorCode::kFormat,
               "video '" + r.video_id + "': modality '" + name + "' is not in the manifest");
        auto values = vec.get<std::vector<double>>();
        if (values.size() != *dim)
          fail(ErrorCode::kFormat, "video '" + r.video_id + "': modality '" + name + "' has " +
                                       std::to_string(values.size()) + " values, manifest says " +
                                       std::to_string(*dim));
        for (double x : values)
          if (!std::isfinite(x))
            fail(ErrorCode::kFormat, "video '" + r.video_id + "': non-finite feature value");
        r.features.emplace(name, std::move(values));
      }
    }
    if (j.contains("speech") && !j["speech"].is_null()) r.speech = j["speech"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed corpus record: ") + e.what());
  }
  if (r.split == Split::kTrain && r.captions.empty())
    fail(ErrorCode::kFormat, "training video '" + r.video_id + "' has no captions");
  return r;
}

std::string record_to_json_text(const VideoRecord& r) {
  ordered_json j;
  j["video_id"] = r.video_id;
  j["split"] = split_name(r.split);
  if (r.category) j["category"] = *r.category;
  j["captions"] = r.captions;
  ordered_json feats = ordered_json::object();
  for (const auto& [name, v] : r.features) feats[name] = v;
  j["features"] = feats;
  if (r.speech) j["speech"] = *r.speech;
  return j.dump();
}

std::vector<VideoRecord> load_corpus(const std::string& path, const FeatureManifest& manifest) {
  std::istringstream in(read_file(path));
  std::vector<VideoRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json_text(line, manifest));
    } catch (const Error& e) {
      fail(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(out.back().video_id).second)
      fail(ErrorCode::kFormat, path + ":" + std::to_string(lineno) + ": duplicate video_id '" +
                                   out.back().video_id + "'");
  }
  return out;
}

void save_corpus(const std::string& path, const std::vector<VideoRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += record_to_json_text(r);
    text.push_back('\n');
  }
  write_file(path, text);
}

std::vector<const VideoRecord*> select_split(const std::vector<VideoRecord>& records, Split split) {
  std::vector<const VideoRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

// ----------------------------------------------------------------------------

namespace {

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s.push_back(' ');
    s += w;
  }
  return s;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticOptions& o) {
  require(o.topics >= 2, "synthetic corpus needs at least two topics");
  require(o.vocab_size >= o.topics, "synthetic vocabulary must have at least one word per topic");
  require(o.videos_per_topic > 0 && o.captions_per_video > 0 && o.caption_length > 0,
          "synthetic corpus sizes must be positive");
  require(o.dominance >= 0.0 && o.dominance <= 1.0, "dominance must lie in [0, 1]");
  const std::size_t K = o.topics;
  const std::size_t block = o.vocab_size / K;
  const std::size_t motion_dim = o.motion_dim == 0 ? 2 * K : o.motion_dim;

  Rng rng(o.seed);
  SyntheticCorpus out;
  out.manifest = FeatureManifest({{"visual", K}, {"motion", motion_dim}, {"aural", K}});

  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::string> words;
    std::vector<double> weights;
    double total = 0.0;
    for (std::size_t j = 0; j < block; ++j) {
      words.push_back("t" + std::to_string(k) + "w" + std::to_string(j));
      weights.push_back(1.0 / std::pow(static_cast<double>(j + 1), o.zipf_exponent));
      total += weights.back();
    }
    for (double& w : weights) w /= total;
    out.blocks.push_back(std::move(words));
    out.block_weights.push_back(std::move(weights));
  }

  if (o.style == CaptionStyle::kTemplate) {
    require(o.templates_per_topic > 0, "template style needs at least one template per topic");
    out.templates.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < o.templates_per_topic; ++t) {
        std::vector<std::string> sentence;
        for (std::size_t i = 0; i < o.caption_length; ++i)
          sentence.push_back(out.blocks[k][sample_categorical(out.block_weights[k], rng)]);
        out.templates[k].push_back(std::move(sentence));
      }
    }
  }
  std::vector<double> template_weights(o.templates_per_topic);
  for (std::size_t t = 0; t < template_weights.size(); ++t)
    template_weights[t] = 1.0 / static_cast<double>(t + 1);

  // Fixed random projection for the motion modality.
  Tensor projection = Tensor::matrix(motion_dim, K);
  for (double& x : projection.values()) x = rng.normal() / std::sqrt(static_cast<double>(K));

  const std::vector<double> concentration(K, o.mixture_concentration);
  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(o.videos_per_topic) * (1.0 - o.val_fraction - o.test_fraction)));
  const std::size_t n_val =
      static_cast<std::size_t>(std::llround(static_cast<double>(o.videos_per_topic) * o.val_fraction));

  auto draw_token = [&](const std::vector<double>& mix) {
    const std::size_t z = sample_categorical(mix, rng);
    return out.blocks[z][sample_categorical(out.block_weights[z], rng)];
  };

  for (std::size_t j = 0; j < o.videos_per_topic; ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      VideoRecord r;
      const std::size_t idx = j * K + k;
      r.video_id = "video" + std::to_string(idx);
      r.split = j < n_train ? Split::kTrain : (j < n_train + n_val ? Split::kVal : Split::kTest);

      auto rest = rng.dirichlet(concentration);
      std::vector<double> mix(K);
      for (std::size_t i = 0; i < K; ++i) mix[i] = (1.0 - o.dominance) * rest[i];
      mix[k] += o.dominance;

      int category = static_cast<int>(k % 20);
      if (o.category_noise > 0.0 && rng.uniform() < o.category_noise)
        category = static_cast<int>(rng.below(std::min<std::size_t>(K, 20)));
      r.category = category;

      for (std::size_t c = 0; c < o.captions_per_video; ++c) {
        if (o.style == CaptionStyle::kTemplate) {
          const std::size_t z = sample_categorical(mix, rng);
          r.captions.push_back(join(out.templates[z][sample_categorical(template_weights, rng)]));
        } else {
          std::vector<std::string> words;
          for (std::size_t i = 0; i < o.caption_length; ++i) words.push_back(draw_token(mix));
          r.captions.push_back(join(words));
        }
      }

      std::vector<double> visual(K), aural(K), motion(motion_dim, 0.0);
      for (std::size_t i = 0; i < K; ++i) visual[i] = mix[i] + o.feature_noise * rng.normal();
      matvec_add(projection, mix, motion);
      for (double& x : motion) x += o.feature_noise * rng.normal();
      for (std::size_t i = 0; i < K; ++i) aural[i] = mix[i] + o.feature_noise * rng.normal();
      r.features["visual"] = std::move(visual);
      r.features["motion"] = std::move(motion);
      if (rng.uniform() < o.aural_rate) r.features["aural"] = std::move(aural);

      if (rng.uniform() < o.speech_rate) {
        std::vector<std::string> words;
        for (std::size_t i = 0; i < o.speech_length; ++i) words.push_back(draw_token(mix));
        for (std::size_t i = 0; i < o.speech_oov; ++i)
          words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)),
                       "um" + std::to_string(rng.below(50)));
        auto text = join(words);
        if (!text.empty()) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        r.speech = text + ".";
      }

      out.records.push_back(std::move(r));
      out.mixtures.push_back(std::move(mix));
      out.dominant.push_back(k);
    }
  }
  return out;
}

}  // namespace tgc
