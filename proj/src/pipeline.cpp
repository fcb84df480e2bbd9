// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "tgc/gradcheck.hpp"

namespace tgc {

using nlohmann::json;

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------

const json& PipelineConfig::defaults() {
  static const json d = json::parse(R"({
    "seed": 1,
    "workers": 0,
    "paths": {
      "corpus": "corpus.jsonl",
      "manifest": "manifest.json",
      "stopwords": "",
      "topic_model": "topics.tgc",
      "predictor": "predictor.tgc",
      "predictions": "predictions.jsonl",
      "topics_file": "",
      "captioner": "captioner.tgc",
      "captions": "captions.jsonl",
      "report": "report.json",
      "truth_topics": "truth_topics.jsonl",
      "output_dir": "."
    },
    "vocab": {"min_count": 3},
    "topics": {
      "K": 20,
      "alpha": 0.0,
      "eta": 0.01,
      "iterations": 1000,
      "burn_in": 200,
      "thin": 20,
      "infer_iterations": 200,
      "infer_burn_in": 50,
      "infer_thin": 5,
      "show_words": 10,
      "num_categories": 20
    },
    "predictor": {
      "hidden": 512,
      "epochs": 100,
      "batch_size": 64,
      "learning_rate": 0.0001,
      "category_classifier": true
    },
    "captioner": {
      "variant": "tgm",
      "topic_source": "predicted",
      "hidden": 512,
      "factors": 512,
      "beam_width": 5,
      "max_length": 30,
      "epochs": 20,
      "batch_size": 64,
      "learning_rate": 0.0001,
      "dropout": 0.5,
      "clip_norm": 5.0,
      "category_one_hot": false,
      "split": "test"
    },
    "synth": {
      "topics": 3,
      "vocab_size": 150,
      "videos_per_topic": 100,
      "captions_per_video": 20,
      "caption_length": 8,
      "style": "bag",
      "templates_per_topic": 3,
      "dominance": 0.6,
      "feature_noise": 0.05,
      "aural_rate": 0.8,
      "speech_rate": 0.5,
      "category_noise": 0.0,
      "val_fraction": 0.1,
      "test_fraction": 0.2
    },
    "ablate": {"k_list": [10, 20, 30]}
  })");
  return d;
}

PipelineConfig::PipelineConfig() : values_(defaults()) {}

namespace {

bool same_kind(const json& want, const json& got) {
  if (want.is_number()) {
    // Integers must stay integers; reals accept either.
    if (want.is_number_integer()) return got.is_number_integer() && !(got.is_number_unsigned() && got.get<std::uint64_t>() > (1ULL << 53));
    return got.is_number();
  }
  if (want.is_array()) return got.is_array();
  return want.type() == got.type();
}

void merge_into(json& dst, const json& patch, const json& schema, const std::string& prefix) {
  if (!patch.is_object())
    fail(ErrorCode::kInvalidArgument, "config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    const auto it = schema.find(key);
    if (it == schema.end()) fail(ErrorCode::kInvalidArgument, "config: unknown key '" + name + "'");
    if (it->is_object()) {
      merge_into(dst[key], value, *it, name);
      continue;
    }
    if (!same_kind(*it, value))
      fail(ErrorCode::kInvalidArgument, "config: '" + name + "' expects " + std::string(it->type_name()) +
                                            ", got " + std::string(value.type_name()));
    if (it->is_number_float())
      dst[key] = value.get<double>();
    else
      dst[key] = value;
  }
}

const json* find_dotted(const json& root, std::string_view dotted) {
  const json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part(dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start));
    if (!node->is_object()) return nullptr;
    const auto it = node->find(part);
    if (it == node->end()) return nullptr;
    node = &*it;
    if (dot == std::string_view::npos) return node;
    start = dot + 1;
  }
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig c;
  try {
    c.merge_json_text(ss.str());
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
  return c;
}

void PipelineConfig::merge_json_text(std::string_view text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("config is not valid JSON: ") + e.what());
  }
  json next = values_;
  merge_into(next, patch, defaults(), "");
  std::swap(values_, next);
  try {
    validate(false);
  } catch (...) {
    std::swap(values_, next);
    throw;
  }
}

void PipelineConfig::set(std::string_view dotted_key, std::string_view value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = std::string(value);
  }
  // A key whose default is a string keeps the raw text ("1" stays "1").
  if (const json* d = find_dotted(defaults(), dotted_key); d && d->is_string())
    parsed = std::string(value);
  json patch = parsed;
  std::string_view rest = dotted_key;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = rest.find('.', start);
    parts.emplace_back(rest.substr(start, dot == std::string_view::npos ? rest.npos : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_json_text(patch.dump());
}

const json& PipelineConfig::lookup(std::string_view dotted_key) const {
  const json* node = find_dotted(values_, dotted_key);
  if (!node) fail(ErrorCode::kInvalidArgument, "config: unknown key '" + std::string(dotted_key) + "'");
  return *node;
}

void PipelineConfig::validate(bool cross_field) const {
  auto positive = [&](const char* key) {
    if (get<std::int64_t>(key) <= 0)
      fail(ErrorCode::kInvalidArgument, std::string("config: '") + key + "' must be positive");
  };
  auto non_negative = [&](const char* key) {
    if (get<std::int64_t>(key) < 0)
      fail(ErrorCode::kInvalidArgument, std::string("config: '") + key + "' must not be negative");
  };
  auto in_range = [&](const char* key, double lo, double hi, bool open_hi) {
    const double v = get<double>(key);
    if (!std::isfinite(v) || v < lo || (open_hi ? v >= hi : v > hi))
      fail(ErrorCode::kInvalidArgument, std::string("config: '") + key + "' is out of range");
  };
  auto one_of = [&](const char* key, std::initializer_list<const char*> allowed) {
    const auto v = get<std::string>(key);
    for (const char* a : allowed)
      if (v == a) return;
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
    fail(ErrorCode::kInvalidArgument, std::string("config: '") + key + "' must be one of " + list);
  };

  non_negative("seed");
  non_negative("workers");
  positive("vocab.min_count");
  for (const char* k : {"topics.K", "topics.iterations", "topics.thin", "topics.infer_iterations",
                        "topics.infer_thin", "topics.show_words", "topics.num_categories"})
    positive(k);
  non_negative("topics.burn_in");
  non_negative("topics.infer_burn_in");
  in_range("topics.alpha", 0.0, 1e6, false);
  in_range("topics.eta", 1e-12, 1e6, false);

  for (const char* k : {"predictor.hidden", "predictor.epochs", "predictor.batch_size"}) positive(k);
  in_range("predictor.learning_rate", 1e-12, 1.0, false);

  one_of("captioner.variant", {"vanilla", "tce", "tcd", "tead", "temd", "tgm"});
  one_of("captioner.topic_source", {"teacher", "predicted", "annotated", "category"});
  one_of("captioner.split", {"train", "val", "test"});
  for (const char* k : {"captioner.hidden", "captioner.factors", "captioner.beam_width",
                        "captioner.max_length", "captioner.epochs", "captioner.batch_size"})
    positive(k);
  in_range("captioner.learning_rate", 1e-12, 1.0, false);
  in_range("captioner.dropout", 0.0, 1.0, true);
  in_range("captioner.clip_norm", 0.0, 1e12, false);

  for (const char* k : {"synth.topics", "synth.vocab_size", "synth.videos_per_topic",
                        "synth.captions_per_video", "synth.caption_length",
                        "synth.templates_per_topic"})
    positive(k);
  one_of("synth.style", {"bag", "template"});
  in_range("synth.dominance", 0.0, 1.0, false);
  in_range("synth.feature_noise", 0.0, 1e6, false);
  in_range("synth.aural_rate", 0.0, 1.0, false);
  in_range("synth.speech_rate", 0.0, 1.0, false);
  in_range("synth.category_noise", 0.0, 1.0, false);
  in_range("synth.val_fraction", 0.0, 1.0, true);
  in_range("synth.test_fraction", 0.0, 1.0, true);

  const auto& ks = lookup("ablate.k_list");
  if (ks.empty()) fail(ErrorCode::kInvalidArgument, "config: 'ablate.k_list' is empty");
  for (const auto& k : ks)
    if (!k.is_number_integer() || k.get<std::int64_t>() <= 0)
      fail(ErrorCode::kInvalidArgument, "config: 'ablate.k_list' must hold positive integers");

  if (!cross_field) return;
  if (get<std::int64_t>("topics.burn_in") >= get<std::int64_t>("topics.iterations"))
    fail(ErrorCode::kInvalidArgument, "config: 'topics.burn_in' must be below 'topics.iterations'");
  if (get<std::int64_t>("topics.infer_burn_in") >= get<std::int64_t>("topics.infer_iterations"))
    fail(ErrorCode::kInvalidArgument,
         "config: 'topics.infer_burn_in' must be below 'topics.infer_iterations'");
  if (get<double>("synth.val_fraction") + get<double>("synth.test_fraction") >= 1.0)
    fail(ErrorCode::kInvalidArgument, "config: synth val and test fractions leave no training videos");
}

void PipelineConfig::check() const { validate(true); }

std::size_t resolve_workers(const PipelineConfig& config) {
  const auto w = config.get<std::size_t>("workers");
  if (w > 0) return w;
  if (const char* env = std::getenv("TGC_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v <= 0 || v > 1024)
      fail(ErrorCode::kInvalidArgument, std::string("TGC_WORKERS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return 1;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ----------------------------------------------------------------------------
// Files
// ----------------------------------------------------------------------------

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : sep) + p;
  return out;
}

}  // namespace

std::vector<TopicRecord> load_topic_file(const std::string& path) {
  std::vector<TopicRecord> rows;
  std::size_t width = 0;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (blank(lines[n])) continue;
    const std::string where = path + ":" + std::to_string(n + 1) + ": ";
    try {
      const json j = json::parse(lines[n]);
      TopicRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.topics = j.at("topics").get<std::vector<double>>();
      if (j.contains("sources")) r.sources = j.at("sources").get<std::vector<std::string>>();
      if (r.topics.empty()) fail(ErrorCode::kFormat, "empty topic vector");
      if (width == 0) width = r.topics.size();
      if (r.topics.size() != width)
        fail(ErrorCode::kFormat, "expected " + std::to_string(width) + " topics, got " +
                                     std::to_string(r.topics.size()));
      for (double v : r.topics)
        if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::kFormat, "topic weights must be finite and non-negative");
      if (!on_simplex(r.topics, 1e-6)) fail(ErrorCode::kFormat, "topic weights must sum to 1");
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, where + e.what());
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    }
  }
  return rows;
}

void save_topic_file(const std::string& path, const std::vector<TopicRecord>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["video_id"] = r.video_id;
    j["topics"] = r.topics;
    j["sources"] = r.sources;
    out += j.dump() + "\n";
  }
  write_text(path, out);
}

std::map<std::string, TopicDistribution> topic_map(const std::vector<TopicRecord>& rows) {
  std::map<std::string, TopicDistribution> m;
  for (const auto& r : rows)
    if (!m.emplace(r.video_id, r.topics).second)
      fail(ErrorCode::kFormat, "duplicate topics for video '" + r.video_id + "'");
  return m;
}

std::vector<GeneratedCaption> load_captions(const std::string& path) {
  std::vector<GeneratedCaption> rows;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (blank(lines[n])) continue;
    try {
      const json j = json::parse(lines[n]);
      rows.push_back({j.at("video_id").get<std::string>(), j.at("caption").get<std::string>(),
                      j.value("log_prob", 0.0), j.value("variant", std::string())});
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, path + ":" + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return rows;
}

void save_captions(const std::string& path, const std::vector<GeneratedCaption>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["video_id"] = r.video_id;
    j["caption"] = r.caption;
    j["log_prob"] = r.log_prob;
    j["variant"] = r.variant;
    out += j.dump() + "\n";
  }
  write_text(path, out);
}

// ----------------------------------------------------------------------------
// Stages
// ----------------------------------------------------------------------------

LoadedCorpus load_pipeline_corpus(const PipelineConfig& config) {
  LoadedCorpus c;
  c.manifest = FeatureManifest::load(config.path("manifest"));
  c.records = load_corpus(config.path("corpus"), c.manifest);
  return c;
}

StopwordSet pipeline_stopwords(const PipelineConfig& config) {
  const auto path = config.path("stopwords");
  return path.empty() ? default_stopwords() : load_stopwords(path);
}

namespace {

LdaOptions lda_options(const PipelineConfig& c) {
  LdaOptions o;
  o.topics = c.get<std::size_t>("topics.K");
  o.alpha = c.get<double>("topics.alpha") > 0.0 ? c.get<double>("topics.alpha") : -1.0;
  o.eta = c.get<double>("topics.eta");
  o.schedule = {c.get<std::size_t>("topics.iterations"), c.get<std::size_t>("topics.burn_in"),
                c.get<std::size_t>("topics.thin")};
  o.seed = derive_seed(c.get<std::uint64_t>("seed"), 1);
  return o;
}

InferSchedule infer_schedule(const PipelineConfig& c) {
  return {c.get<std::size_t>("topics.infer_iterations"), c.get<std::size_t>("topics.infer_burn_in"),
          c.get<std::size_t>("topics.infer_thin")};
}

std::string source_name(TopicSource s) { return s == TopicSource::kGeneral ? "general" : "speech"; }

}  // namespace

TopicBundle mine_topics(const std::vector<VideoRecord>& records, const PipelineConfig& config) {
  TopicBundle b;
  b.vocab = Vocabulary::build(records, config.get<std::size_t>("vocab.min_count"));
  b.stopwords = pipeline_stopwords(config);
  std::vector<std::string> ids;
  std::vector<BagOfWords> docs;
  for (const VideoRecord* r : select_split(records, Split::kTrain)) {
    ids.push_back(r->video_id);
    docs.push_back(video_document(*r, b.vocab, b.stopwords));
  }
  b.model = lda_fit(ids, docs, b.vocab.size(), lda_options(config));
  return b;
}

PredictorBundle train_predictors(const std::vector<VideoRecord>& records,
                                 const FeatureManifest& manifest, const TopicBundle& topics,
                                 const PipelineConfig& config) {
  PredictorTrainOptions o;
  o.hidden = config.get<std::size_t>("predictor.hidden");
  o.epochs = config.get<std::size_t>("predictor.epochs");
  o.batch_size = config.get<std::size_t>("predictor.batch_size");
  o.adam.learning_rate = config.get<double>("predictor.learning_rate");
  o.seed = derive_seed(config.get<std::uint64_t>("seed"), 2);

  const auto train = select_split(records, Split::kTrain);
  PredictorBundle b;
  b.manifest = manifest;
  b.general = train_general_predictor(train, manifest, topics.model, o).params;
  b.num_categories = config.get<std::size_t>("topics.num_categories");
  const bool labelled = std::all_of(train.begin(), train.end(),
                                    [](const VideoRecord* r) { return r->category.has_value(); });
  if (config.get<bool>("predictor.category_classifier") && labelled) {
    o.seed = derive_seed(config.get<std::uint64_t>("seed"), 3);
    b.category = train_category_classifier(train, manifest, b.num_categories, o).params;
  }
  return b;
}

std::vector<TopicRecord> predict_topics(const std::vector<VideoRecord>& records,
                                        const TopicBundle& topics, const PredictorBundle& predictor,
                                        const PipelineConfig& config) {
  require(topics.model.num_topics == predictor.general.output_dim(),
          "predictor and topic model disagree on the number of topics");
  const auto schedule = infer_schedule(config);
  const auto seed = config.get<std::uint64_t>("seed");
  std::vector<TopicRecord> out(records.size());
  parallel_for(records.size(), resolve_workers(config), [&](std::size_t i) {
    const VideoRecord& r = records[i];
    const auto general = predict_general(r, predictor.manifest, predictor.general);
    Rng rng(derive_seed(seed, 1000003 + i));
    const auto speech = predict_speech(r, topics.model, topics.vocab, topics.stopwords, schedule, rng);
    const auto combined = ensemble(general, speech);
    out[i].video_id = r.video_id;
    out[i].topics = combined.distribution;
    for (TopicSource s : combined.sources) out[i].sources.push_back(source_name(s));
  });
  return out;
}

std::vector<TopicDistribution> captioner_topics(const std::vector<const VideoRecord*>& records,
                                                std::string_view source, Variant variant,
                                                const TopicInputs& inputs,
                                                const FeatureManifest& manifest,
                                                bool category_one_hot) {
  std::vector<TopicDistribution> out(records.size());
  if (variant == Variant::kVanilla) return out;
  auto from_map = [&](const std::map<std::string, TopicDistribution>& m, const char* what) {
    if (m.empty()) fail(ErrorCode::kNotFound, std::string("no ") + what + " topics were supplied");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto it = m.find(records[i]->video_id);
      if (it == m.end())
        fail(ErrorCode::kNotFound, std::string("no ") + what + " topics for video '" + records[i]->video_id + "'");
      out[i] = it->second;
    }
  };
  if (source == "teacher") {
    require(inputs.topics != nullptr, "teacher topics need a topic model");
    for (std::size_t i = 0; i < records.size(); ++i)
      out[i] = teacher_distribution(*records[i], inputs.topics->model);
  } else if (source == "predicted") {
    from_map(inputs.predicted, "predicted");
  } else if (source == "annotated") {
    from_map(inputs.annotated, "annotated");
  } else if (source == "category") {
    if (!inputs.predictor || !inputs.predictor->category)
      fail(ErrorCode::kNotFound, "category topics need a predictor checkpoint with a category classifier");
    require(inputs.predictor->manifest == manifest, "predictor was trained on a different feature manifest");
    for (std::size_t i = 0; i < records.size(); ++i)
      out[i] = predict_category(assemble_features(*records[i], manifest), *inputs.predictor->category,
                                category_one_hot);
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown topic source '" + std::string(source) + "'");
  }
  return out;
}

CaptionerBundle train_captioner_stage(const std::vector<VideoRecord>& records,
                                      const FeatureManifest& manifest, const TopicInputs& inputs,
                                      const PipelineConfig& config,
                                      std::vector<double>* epoch_losses) {
  const Variant variant = parse_variant(config.get<std::string>("captioner.variant"));
  const auto source = config.get<std::string>("captioner.topic_source");
  const auto train = select_split(records, Split::kTrain);
  require(!train.empty(), "corpus has no training videos");
  const auto topics = captioner_topics(train, source, variant, inputs, manifest,
                                       config.get<bool>("captioner.category_one_hot"));

  CaptionerBundle b;
  b.vocab = Vocabulary::build(records, config.get<std::size_t>("vocab.min_count"));
  b.manifest = manifest;
  b.topic_source = source;

  CaptionerConfig cc;
  cc.variant = variant;
  cc.feature_dim = manifest.total_dim();
  cc.num_topics = variant == Variant::kVanilla ? std::max<std::size_t>(1, config.get<std::size_t>("topics.K"))
                                               : topics.front().size();
  cc.vocab_size = b.vocab.size();
  cc.hidden = config.get<std::size_t>("captioner.hidden");
  cc.factors = config.get<std::size_t>("captioner.factors");
  cc.max_length = config.get<std::size_t>("captioner.max_length");
  cc.dropout = config.get<double>("captioner.dropout");

  const auto seed = config.get<std::uint64_t>("seed");
  Rng init_rng(derive_seed(seed, 4));
  auto params = init_caption_model(cc, init_rng);
  const auto data = build_caption_dataset(train, manifest, topics, b.vocab, cc.max_length);

  CaptionerTrainOptions o;
  o.epochs = config.get<std::size_t>("captioner.epochs");
  o.batch_size = config.get<std::size_t>("captioner.batch_size");
  o.adam.learning_rate = config.get<double>("captioner.learning_rate");
  o.clip_norm = config.get<double>("captioner.clip_norm");
  o.seed = derive_seed(seed, 5);
  auto result = train_captioner(std::move(params), data, o);
  if (epoch_losses) *epoch_losses = result.epoch_losses;
  b.params = std::move(result.params);
  return b;
}

std::vector<GeneratedCaption> generate_captions(const CaptionerBundle& captioner,
                                                const std::vector<const VideoRecord*>& records,
                                                const TopicInputs& inputs,
                                                const PipelineConfig& config) {
  const auto& cfg = captioner.params.config;
  std::string source = captioner.topic_source;
  if (source == "teacher") source = "predicted";
  const auto topics = captioner_topics(records, source, cfg.variant, inputs, captioner.manifest,
                                       config.get<bool>("captioner.category_one_hot"));
  if (cfg.variant != Variant::kVanilla)
    for (std::size_t i = 0; i < records.size(); ++i)
      if (topics[i].size() != cfg.num_topics)
        fail(ErrorCode::kInvalidArgument, "video '" + records[i]->video_id + "' has " +
                                              std::to_string(topics[i].size()) + " topics, the captioner expects " +
                                              std::to_string(cfg.num_topics));
  const auto beam = config.get<std::size_t>("captioner.beam_width");
  const auto max_len = config.get<std::size_t>("captioner.max_length");
  std::vector<GeneratedCaption> out(records.size());
  parallel_for(records.size(), resolve_workers(config), [&](std::size_t i) {
    const auto features = assemble_features(*records[i], captioner.manifest);
    const auto best = beam_search(captioner.params, features, topics[i], beam, max_len);
    out[i] = {records[i]->video_id, captioner.vocab.decode(best.tokens), best.log_prob,
              std::string(variant_name(cfg.variant))};
  });
  return out;
}

MetricReport evaluate_captions(const std::vector<GeneratedCaption>& captions,
                               const std::vector<VideoRecord>& records) {
  std::map<std::string, const VideoRecord*> by_id;
  for (const auto& r : records) by_id[r.video_id] = &r;
  std::vector<EvalPair> pairs;
  for (const auto& c : captions) {
    const auto it = by_id.find(c.video_id);
    if (it == by_id.end()) fail(ErrorCode::kNotFound, "captioned video '" + c.video_id + "' is not in the corpus");
    EvalPair p{c.video_id, tokenize(c.caption), {}};
    for (const auto& ref : it->second->captions) p.references.push_back(tokenize(ref));
    pairs.push_back(std::move(p));
  }
  return evaluate_corpus(pairs);
}

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

namespace {

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

TopicInputs load_inputs(const PipelineConfig& config, std::string_view source,
                        TopicBundle* topic_storage, PredictorBundle* predictor_storage) {
  TopicInputs in;
  if (source == "teacher") {
    *topic_storage = unpack_topics(load_checkpoint(config.path("topic_model")));
    in.topics = topic_storage;
  }
  if (source == "predicted") in.predicted = topic_map(load_topic_file(config.path("predictions")));
  if (source == "annotated") {
    const auto path = config.path("topics_file");
    if (path.empty()) fail(ErrorCode::kInvalidArgument, "annotated topics need --topics-file");
    in.annotated = topic_map(load_topic_file(path));
  }
  if (source == "category") {
    *predictor_storage = unpack_predictor(load_checkpoint(config.path("predictor")));
    in.predictor = predictor_storage;
  }
  return in;
}

// Settings stored in checkpoints. Worker count and file locations do not
// change results and are left out so artifacts match across runs.
json config_snapshot(const PipelineConfig& c) {
  json j = c.values();
  j.erase("workers");
  j.erase("paths");
  return j;
}

std::string cmd_synth(const PipelineConfig& c) {
  SyntheticOptions o;
  o.topics = c.get<std::size_t>("synth.topics");
  o.vocab_size = c.get<std::size_t>("synth.vocab_size");
  o.videos_per_topic = c.get<std::size_t>("synth.videos_per_topic");
  o.captions_per_video = c.get<std::size_t>("synth.captions_per_video");
  o.caption_length = c.get<std::size_t>("synth.caption_length");
  o.style = c.get<std::string>("synth.style") == "template" ? CaptionStyle::kTemplate : CaptionStyle::kBag;
  o.templates_per_topic = c.get<std::size_t>("synth.templates_per_topic");
  o.dominance = c.get<double>("synth.dominance");
  o.feature_noise = c.get<double>("synth.feature_noise");
  o.aural_rate = c.get<double>("synth.aural_rate");
  o.speech_rate = c.get<double>("synth.speech_rate");
  o.category_noise = c.get<double>("synth.category_noise");
  o.val_fraction = c.get<double>("synth.val_fraction");
  o.test_fraction = c.get<double>("synth.test_fraction");
  o.seed = c.get<std::uint64_t>("seed");
  const auto corpus = generate_synthetic_corpus(o);

  save_corpus(c.path("corpus"), corpus.records);
  corpus.manifest.save(c.path("manifest"));
  std::vector<TopicRecord> truth;
  for (std::size_t i = 0; i < corpus.records.size(); ++i)
    truth.push_back({corpus.records[i].video_id, corpus.mixtures[i], {"annotated"}});
  if (!c.path("truth_topics").empty()) save_topic_file(c.path("truth_topics"), truth);
  return format("wrote %zu videos (%zu topics, %zu feature dims) to %s\n", corpus.records.size(),
                o.topics, corpus.manifest.total_dim(), c.path("corpus").c_str());
}

std::string cmd_mine_topics(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  const auto bundle = mine_topics(corpus.records, c);
  save_checkpoint(c.path("topic_model"), pack_topics(bundle, config_snapshot(c)));
  std::string out = format("fitted %zu topics on %zu documents, vocabulary %zu, %zu retained samples\n",
                           bundle.model.num_topics, bundle.model.num_docs(), bundle.vocab.size(),
                           bundle.model.retained_samples);
  for (std::size_t k = 0; k < bundle.model.num_topics; ++k) {
    std::vector<std::string> words;
    for (std::size_t w : top_words(bundle.model, k, 5)) words.push_back(bundle.vocab.token(w));
    out += format("topic %2zu: ", k) + join(words, " ") + "\n";
  }
  return out;
}

std::string cmd_show_topics(const PipelineConfig& c) {
  const auto bundle = unpack_topics(load_checkpoint(c.path("topic_model")));
  const auto n = c.get<std::size_t>("topics.show_words");
  std::string out;
  for (std::size_t k = 0; k < bundle.model.num_topics; ++k) {
    std::vector<std::string> words;
    for (std::size_t w : top_words(bundle.model, k, n))
      words.push_back(bundle.vocab.token(w) + format(":%.3f", bundle.model.beta(k, w)));
    out += format("topic %2zu: ", k) + join(words, " ") + "\n";
  }
  return out;
}

std::string cmd_cooccurrence(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  const auto bundle = unpack_topics(load_checkpoint(c.path("topic_model")));
  const auto train = select_split(corpus.records, Split::kTrain);
  const auto table = topic_category_cooccurrence(train, bundle.model, c.get<std::size_t>("topics.num_categories"));

  nlohmann::ordered_json j;
  j["num_topics"] = table.num_topics;
  j["num_categories"] = table.num_categories;
  j["counts"] = table.counts;
  j["percent"] = table.percent;
  j["videos_per_topic"] = table.videos_per_topic;
  const auto path = (std::filesystem::path(c.path("output_dir")) / "cooccurrence.json").string();
  write_text(path, j.dump(2) + "\n");

  std::string out = "topic  videos  top categories (share)\n";
  for (std::size_t k = 0; k < table.num_topics; ++k) {
    std::vector<std::size_t> order(table.num_categories);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return table.counts[k][a] > table.counts[k][b];
    });
    std::string cats;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
      if (table.counts[k][order[i]] == 0) break;
      cats += format(" %zu(%.0f%%)", order[i], 100.0 * table.percent[k][order[i]]);
    }
    out += format("%5zu  %6zu ", k, table.videos_per_topic[k]) + cats + "\n";
  }
  return out;
}

std::string cmd_train_predictor(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  const auto topics = unpack_topics(load_checkpoint(c.path("topic_model")));
  const auto bundle = train_predictors(corpus.records, corpus.manifest, topics, c);
  save_checkpoint(c.path("predictor"), pack_predictor(bundle, config_snapshot(c)));

  double kl = 0.0;
  const auto train = select_split(corpus.records, Split::kTrain);
  for (const VideoRecord* r : train)
    kl += kl_divergence(teacher_distribution(*r, topics.model), predict_general(*r, corpus.manifest, bundle.general));
  return format("trained topic predictor on %zu videos, mean KL to teacher %.6f%s\n", train.size(),
                kl / static_cast<double>(train.size()),
                bundle.category ? ", plus category classifier" : "");
}

std::string cmd_predict_topics(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  const auto topics = unpack_topics(load_checkpoint(c.path("topic_model")));
  const auto predictor = unpack_predictor(load_checkpoint(c.path("predictor")));
  require(predictor.manifest == corpus.manifest, "predictor was trained on a different feature manifest");
  const auto rows = predict_topics(corpus.records, topics, predictor, c);
  save_topic_file(c.path("predictions"), rows);
  std::size_t with_speech = 0;
  for (const auto& r : rows) with_speech += r.sources.size() > 1;
  return format("predicted topics for %zu videos (%zu with usable speech) into %s\n", rows.size(),
                with_speech, c.path("predictions").c_str());
}

std::string cmd_train_captioner(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  TopicBundle topics;
  PredictorBundle predictor;
  const auto variant = parse_variant(c.get<std::string>("captioner.variant"));
  const auto source = variant == Variant::kVanilla ? std::string("none") : c.get<std::string>("captioner.topic_source");
  const auto inputs = load_inputs(c, source, &topics, &predictor);
  std::vector<double> losses;
  const auto bundle = train_captioner_stage(corpus.records, corpus.manifest, inputs, c, &losses);
  save_checkpoint(c.path("captioner"), pack_captioner(bundle, config_snapshot(c)));
  return format("trained %s captioner (%zu parameters, topics: %s), final epoch loss %.4f\n",
                std::string(variant_name(variant)).c_str(), bundle.params.parameter_count(),
                bundle.topic_source.c_str(), losses.empty() ? 0.0 : losses.back());
}

std::vector<GeneratedCaption> caption_split(const PipelineConfig& c, const LoadedCorpus& corpus,
                                            const CaptionerBundle& captioner) {
  require(captioner.manifest == corpus.manifest, "captioner was trained on a different feature manifest");
  TopicBundle topics;
  PredictorBundle predictor;
  const std::string source =
      captioner.params.config.variant == Variant::kVanilla ? "none" : captioner.topic_source;
  const auto inputs = load_inputs(c, source == "teacher" ? "predicted" : source, &topics, &predictor);
  const auto records = select_split(corpus.records, parse_split(c.get<std::string>("captioner.split")));
  require(!records.empty(), "the selected split has no videos");
  return generate_captions(captioner, records, inputs, c);
}

std::string cmd_caption(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  const auto captioner = unpack_captioner(load_checkpoint(c.path("captioner")));
  const auto rows = caption_split(c, corpus, captioner);
  save_captions(c.path("captions"), rows);
  std::string out = format("captioned %zu videos into %s\n", rows.size(), c.path("captions").c_str());
  for (std::size_t i = 0; i < std::min<std::size_t>(3, rows.size()); ++i)
    out += rows[i].video_id + ": " + rows[i].caption + "\n";
  return out;
}

std::string cmd_evaluate(const PipelineConfig& c) {
  const auto corpus = load_pipeline_corpus(c);
  const auto report = evaluate_captions(load_captions(c.path("captions")), corpus.records);
  write_text(c.path("report"), report_to_json(report) + "\n");
  return report_to_table(report);
}

std::string cmd_gradcheck(const PipelineConfig& c) {
  std::string out = "check                        coords  max rel error\n";
  bool ok = true;
  for (const auto& e : gradient_suite(c.get<std::uint64_t>("seed"))) {
    out += format("%-28s %6zu  %.3e\n", e.name.c_str(), e.coordinates, e.max_relative_error);
    ok = ok && e.max_relative_error < 1e-4;
  }
  if (!ok) fail(ErrorCode::kNumeric, "gradient check exceeded 1e-4 relative error");
  return out;
}

std::string cmd_ablate_topics(const PipelineConfig& base) {
  const auto corpus = load_pipeline_corpus(base);
  const auto dir = std::filesystem::path(base.path("output_dir"));
  std::string out = "    K  BLEU@4  ROUGE-L   CIDEr  report\n";
  for (const auto& kj : base.values().at("ablate").at("k_list")) {
    const auto K = kj.get<std::size_t>();
    PipelineConfig c = base;
    c.set("topics.K", std::to_string(K));
    const auto topics = mine_topics(corpus.records, c);
    const auto predictor = train_predictors(corpus.records, corpus.manifest, topics, c);
    const auto predicted = predict_topics(corpus.records, topics, predictor, c);

    TopicInputs inputs;
    inputs.topics = &topics;
    inputs.predictor = &predictor;
    inputs.predicted = topic_map(predicted);
    if (!c.path("topics_file").empty() && c.get<std::string>("captioner.topic_source") == "annotated")
      fail(ErrorCode::kInvalidArgument, "ablate-topics sweeps mined topics; annotated topics have a fixed K");
    const auto captioner = train_captioner_stage(corpus.records, corpus.manifest, inputs, c);
    const auto records = select_split(corpus.records, parse_split(c.get<std::string>("captioner.split")));
    require(!records.empty(), "the selected split has no videos");
    const auto captions = generate_captions(captioner, records, inputs, c);
    const auto report = evaluate_captions(captions, corpus.records);

    const auto path = (dir / ("report_K" + std::to_string(K) + ".json")).string();
    auto j = json::parse(report_to_json(report, false));
    j["K"] = K;
    write_text(path, j.dump(2) + "\n");
    out += format("%5zu  %6.4f  %7.4f  %6.4f  ", K, report.bleu4, report.rouge_l, report.cider) + path + "\n";
  }
  return out;
}

using CommandFn = std::string (*)(const PipelineConfig&);

const std::vector<std::pair<std::string, CommandFn>>& command_table() {
  static const std::vector<std::pair<std::string, CommandFn>> table = {
      {"synth", cmd_synth},
      {"mine-topics", cmd_mine_topics},
      {"show-topics", cmd_show_topics},
      {"cooccurrence", cmd_cooccurrence},
      {"train-predictor", cmd_train_predictor},
      {"predict-topics", cmd_predict_topics},
      {"train-captioner", cmd_train_captioner},
      {"caption", cmd_caption},
      {"evaluate", cmd_evaluate},
      {"gradcheck", cmd_gradcheck},
      {"ablate-topics", cmd_ablate_topics},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : command_table()) n.push_back(name);
    return n;
  }();
  return names;
}

std::string run_command(std::string_view name, const PipelineConfig& config) {
  config.check();
  for (const auto& [n, fn] : command_table())
    if (n == name) return fn(config);
  fail(ErrorCode::kInvalidArgument, "unknown command '" + std::string(name) + "'");
}

}  // namespace tgc
