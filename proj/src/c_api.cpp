// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/tgc.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "tgc/checkpoint.hpp"
#include "tgc/metrics.hpp"
#include "tgc/pipeline.hpp"

struct tgc_config {
  tgc::PipelineConfig config;
};

struct tgc_topic_model {
  tgc::TopicBundle bundle;
};

struct tgc_captioner {
  tgc::CaptionerBundle bundle;
};

namespace {

thread_local std::string g_last_error;

tgc_status to_status(tgc::ErrorCode code) {
  switch (code) {
    case tgc::ErrorCode::kInvalidArgument: return TGC_ERR_INVALID_ARGUMENT;
    case tgc::ErrorCode::kIo: return TGC_ERR_IO;
    case tgc::ErrorCode::kFormat: return TGC_ERR_FORMAT;
    case tgc::ErrorCode::kVersion: return TGC_ERR_VERSION;
    case tgc::ErrorCode::kNumeric: return TGC_ERR_NUMERIC;
    case tgc::ErrorCode::kNotFound: return TGC_ERR_NOT_FOUND;
  }
  return TGC_ERR_INTERNAL;
}

template <class F>
tgc_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return TGC_OK;
  } catch (const tgc::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return TGC_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TGC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TGC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return TGC_ERR_INTERNAL;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  if (!p) tgc::fail(tgc::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

}  // namespace

extern "C" {

const char* tgc_version(void) { return "0.1.0"; }

const char* tgc_last_error(void) { return g_last_error.c_str(); }

void tgc_string_free(char* s) { std::free(s); }

tgc_status tgc_config_create(tgc_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new tgc_config{};
  });
}

tgc_status tgc_config_load(const char* path, tgc_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new tgc_config{tgc::PipelineConfig::load(path)};
  });
}

tgc_status tgc_config_merge_json(tgc_config* config, const char* json) {
  return guard([&] {
    need(config, "config");
    need(json, "json");
    config->config.merge_json_text(json);
  });
}

tgc_status tgc_config_set(tgc_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->config.set(key, value);
  });
}

tgc_status tgc_config_to_json(const tgc_config* config, char** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = copy_string(config->config.to_json_text());
  });
}

void tgc_config_free(tgc_config* config) { delete config; }

size_t tgc_command_count(void) { return tgc::command_names().size(); }

const char* tgc_command_name(size_t index) {
  const auto& names = tgc::command_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

tgc_status tgc_run(const tgc_config* config, const char* command, char** summary) {
  return guard([&] {
    need(config, "config");
    need(command, "command");
    const std::string text = tgc::run_command(command, config->config);
    if (summary) *summary = copy_string(text);
  });
}

tgc_status tgc_topic_model_load(const char* path, tgc_topic_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new tgc_topic_model{tgc::unpack_topics(tgc::load_checkpoint(path))};
  });
}

size_t tgc_topic_model_num_topics(const tgc_topic_model* model) {
  return model ? model->bundle.model.num_topics : 0;
}

tgc_status tgc_topic_model_infer_text(const tgc_topic_model* model, const char* text, uint64_t seed,
                                      double* out, size_t out_len) {
  return guard([&] {
    need(model, "model");
    need(text, "text");
    need(out, "out");
    const auto& b = model->bundle;
    if (out_len != b.model.num_topics)
      tgc::fail(tgc::ErrorCode::kInvalidArgument,
                "output buffer holds " + std::to_string(out_len) + " values, the model has " +
                    std::to_string(b.model.num_topics) + " topics");
    const auto doc = tgc::to_bag_of_words(tgc::tokenize(text), b.vocab, b.stopwords);
    tgc::Rng rng(seed);
    const auto theta = tgc::lda_infer(doc, b.model, tgc::InferSchedule{}, rng);
    std::copy(theta.begin(), theta.end(), out);
  });
}

void tgc_topic_model_free(tgc_topic_model* model) { delete model; }

tgc_status tgc_captioner_load(const char* path, tgc_captioner** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new tgc_captioner{tgc::unpack_captioner(tgc::load_checkpoint(path))};
  });
}

size_t tgc_captioner_feature_dim(const tgc_captioner* captioner) {
  return captioner ? captioner->bundle.params.config.feature_dim : 0;
}

size_t tgc_captioner_num_topics(const tgc_captioner* captioner) {
  if (!captioner || captioner->bundle.params.config.variant == tgc::Variant::kVanilla) return 0;
  return captioner->bundle.params.config.num_topics;
}

tgc_status tgc_captioner_generate(const tgc_captioner* captioner, const double* features,
                                  size_t num_features, const double* topics, size_t num_topics,
                                  size_t beam_width, char** caption, double* log_prob) {
  return guard([&] {
    need(captioner, "captioner");
    need(features, "features");
    need(caption, "caption");
    if (num_topics > 0) need(topics, "topics");
    const auto& b = captioner->bundle;
    if (beam_width == 0) tgc::fail(tgc::ErrorCode::kInvalidArgument, "beam width must be positive");
    if (num_features != b.params.config.feature_dim)
      tgc::fail(tgc::ErrorCode::kInvalidArgument,
                "expected " + std::to_string(b.params.config.feature_dim) + " feature values, got " +
                    std::to_string(num_features));
    const auto best = tgc::beam_search(b.params, std::span<const double>(features, num_features),
                                       std::span<const double>(topics, num_topics), beam_width,
                                       b.params.config.max_length);
    *caption = copy_string(b.vocab.decode(best.tokens));
    if (log_prob) *log_prob = best.log_prob;
  });
}

void tgc_captioner_free(tgc_captioner* captioner) { delete captioner; }

tgc_status tgc_evaluate_json(const char* pairs_json, char** report_json) {
  return guard([&] {
    need(pairs_json, "pairs_json");
    need(report_json, "report_json");
    const auto j = nlohmann::json::parse(pairs_json);
    if (!j.is_array()) tgc::fail(tgc::ErrorCode::kFormat, "expected a JSON array of pairs");
    std::vector<tgc::EvalPair> pairs;
    for (const auto& e : j) {
      tgc::EvalPair p;
      p.video_id = e.value("video_id", std::to_string(pairs.size()));
      p.hypothesis = tgc::tokenize(e.at("hypothesis").get<std::string>());
      for (const auto& r : e.at("references")) p.references.push_back(tgc::tokenize(r.get<std::string>()));
      pairs.push_back(std::move(p));
    }
    *report_json = copy_string(tgc::report_to_json(tgc::evaluate_corpus(pairs)));
  });
}

}  // extern "C"
