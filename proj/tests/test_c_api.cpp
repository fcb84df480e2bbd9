// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors
//
// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "tgc/tgc.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  tgc_string_free(s);
  return out;
}

struct Scratch {
  fs::path dir;
  tgc_config* config = nullptr;

  explicit Scratch(const char* name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    REQUIRE(tgc_config_create(&config) == TGC_OK);
    for (const char* key : {"corpus", "manifest", "topic_model", "captioner", "captions", "report",
                            "truth_topics", "predictions", "predictor"})
      REQUIRE(tgc_config_set(config, (std::string("paths.") + key).c_str(), (dir / key).string().c_str()) == TGC_OK);
    REQUIRE(tgc_config_merge_json(config, R"({
      "synth": {"videos_per_topic": 10, "captions_per_video": 3, "vocab_size": 45},
      "topics": {"K": 3, "iterations": 40, "burn_in": 10, "thin": 10},
      "captioner": {"topic_source": "teacher", "hidden": 8, "factors": 4, "epochs": 2,
                    "learning_rate": 0.01, "max_length": 8}
    })") == TGC_OK);
  }
  ~Scratch() {
    tgc_config_free(config);
    fs::remove_all(dir);
  }
  void run(const char* command) {
    char* summary = nullptr;
    REQUIRE_MESSAGE(tgc_run(config, command, &summary) == TGC_OK, tgc_last_error());
    CHECK(!take(summary).empty());
  }
};

}  // namespace

TEST_CASE("version and commands") {
  CHECK(std::strlen(tgc_version()) > 0);
  std::vector<std::string> names;
  for (size_t i = 0; i < tgc_command_count(); ++i) names.push_back(tgc_command_name(i));
  CHECK(names.size() == 11);
  CHECK(names.front() == "synth");
  CHECK(tgc_command_name(999) == nullptr);
}

TEST_CASE("config errors map to status codes") {
  tgc_config* c = nullptr;
  REQUIRE(tgc_config_create(&c) == TGC_OK);
  CHECK(tgc_config_set(c, "nope", "1") == TGC_ERR_INVALID_ARGUMENT);
  CHECK(std::string(tgc_last_error()).find("nope") != std::string::npos);
  CHECK(tgc_config_merge_json(c, "{bad") == TGC_ERR_FORMAT);
  CHECK(tgc_config_set(nullptr, "seed", "1") == TGC_ERR_INVALID_ARGUMENT);
  CHECK(tgc_config_load("/nonexistent/tgc.json", &c) == TGC_ERR_IO);
  REQUIRE(tgc_config_set(c, "seed", "42") == TGC_OK);
  char* text = nullptr;
  REQUIRE(tgc_config_to_json(c, &text) == TGC_OK);
  CHECK(take(text).find("\"seed\": 42") != std::string::npos);
  char* summary = nullptr;
  CHECK(tgc_run(c, "fly", &summary) == TGC_ERR_INVALID_ARGUMENT);
  tgc_config_free(c);
}

TEST_CASE("models load and run through handles") {
  Scratch s("tgc_c_api_test");
  s.run("synth");
  s.run("mine-topics");
  s.run("train-captioner");

  tgc_topic_model* tm = nullptr;
  REQUIRE(tgc_topic_model_load((s.dir / "topic_model").string().c_str(), &tm) == TGC_OK);
  CHECK(tgc_topic_model_num_topics(tm) == 3);
  double theta[3] = {0, 0, 0}, again[3] = {1, 1, 1};
  REQUIRE(tgc_topic_model_infer_text(tm, "t0w0 t0w1 t0w2 t0w0", 5, theta, 3) == TGC_OK);
  REQUIRE(tgc_topic_model_infer_text(tm, "t0w0 t0w1 t0w2 t0w0", 5, again, 3) == TGC_OK);
  CHECK(theta[0] + theta[1] + theta[2] == doctest::Approx(1.0));
  CHECK(std::memcmp(theta, again, sizeof theta) == 0);
  CHECK(tgc_topic_model_infer_text(tm, "x", 5, theta, 2) == TGC_ERR_INVALID_ARGUMENT);
  tgc_topic_model_free(tm);

  tgc_captioner* cap = nullptr;
  REQUIRE(tgc_captioner_load((s.dir / "captioner").string().c_str(), &cap) == TGC_OK);
  const size_t dim = tgc_captioner_feature_dim(cap);
  CHECK(dim == 12);
  CHECK(tgc_captioner_num_topics(cap) == 3);
  std::vector<double> feats(dim, 0.1);
  const double topics[3] = {0.2, 0.3, 0.5};
  char* caption = nullptr;
  double lp = 0.0, lp2 = 1.0;
  REQUIRE(tgc_captioner_generate(cap, feats.data(), dim, topics, 3, 2, &caption, &lp) == TGC_OK);
  const std::string first = take(caption);
  REQUIRE(tgc_captioner_generate(cap, feats.data(), dim, topics, 3, 2, &caption, &lp2) == TGC_OK);
  CHECK(take(caption) == first);
  CHECK(lp == lp2);
  CHECK(lp <= 0.0);
  CHECK(tgc_captioner_generate(cap, feats.data(), dim - 1, topics, 3, 2, &caption, &lp) == TGC_ERR_INVALID_ARGUMENT);
  CHECK(tgc_captioner_generate(cap, feats.data(), dim, topics, 3, 0, &caption, &lp) == TGC_ERR_INVALID_ARGUMENT);
  tgc_captioner_free(cap);

  CHECK(tgc_captioner_load((s.dir / "corpus").string().c_str(), &cap) == TGC_ERR_FORMAT);
  CHECK(tgc_captioner_load((s.dir / "missing").string().c_str(), &cap) == TGC_ERR_IO);
}

TEST_CASE("evaluation through json") {
  char* report = nullptr;
  REQUIRE(tgc_evaluate_json(R"([{"video_id": "a", "hypothesis": "a man is cooking food",
                                 "references": ["a man is cooking food"]},
                                {"video_id": "b", "hypothesis": "two dogs play in the snow",
                                 "references": ["two dogs play in the snow"]}])",
                            &report) == TGC_OK);
  const auto text = take(report);
  CHECK(text.find("\"bleu4\": 1.0") != std::string::npos);
  CHECK(tgc_evaluate_json("[", &report) != TGC_OK);
  CHECK(tgc_evaluate_json("{}", &report) == TGC_ERR_FORMAT);
}
