// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tgc/pipeline.hpp"

using namespace tgc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A scratch directory with every path pointing inside it.
struct Workspace {
  fs::path dir;
  PipelineConfig config;

  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* key : {"corpus", "manifest", "topic_model", "predictor", "predictions", "captioner",
                            "captions", "report", "truth_topics"})
      config.set(std::string("paths.") + key, (dir / key).string());
    config.set("paths.output_dir", dir.string());
    config.merge_json_text(R"({
      "synth": {"videos_per_topic": 15, "captions_per_video": 4, "vocab_size": 60},
      "topics": {"K": 3, "iterations": 60, "burn_in": 20, "thin": 10,
                 "infer_iterations": 30, "infer_burn_in": 10, "infer_thin": 5},
      "predictor": {"hidden": 8, "epochs": 5, "learning_rate": 0.01},
      "captioner": {"hidden": 8, "factors": 4, "epochs": 2, "batch_size": 16, "learning_rate": 0.01,
                    "beam_width": 2, "max_length": 10}
    })");
  }
  ~Workspace() { fs::remove_all(dir); }

  void run(const std::string& command) { run_command(command, config); }
};

}  // namespace

TEST_CASE("config defaults follow the training settings") {
  const PipelineConfig c;
  CHECK(c.get<int>("captioner.hidden") == 512);
  CHECK(c.get<int>("captioner.factors") == 512);
  CHECK(c.get<double>("captioner.dropout") == 0.5);
  CHECK(c.get<double>("captioner.learning_rate") == 1e-4);
  CHECK(c.get<double>("predictor.learning_rate") == 1e-4);
  CHECK(c.get<int>("captioner.beam_width") == 5);
  CHECK(c.get<int>("captioner.max_length") == 30);
  CHECK(c.get<int>("vocab.min_count") == 3);
  CHECK(c.get<int>("topics.K") == 20);
  CHECK(c.get<double>("topics.eta") == 0.01);
  CHECK(c.get<int>("topics.iterations") == 1000);
  CHECK(c.get<int>("topics.burn_in") == 200);
  CHECK(c.get<int>("topics.thin") == 20);
  CHECK(c.get<std::vector<int>>("ablate.k_list") == std::vector<int>{10, 20, 30});
  CHECK(c.get<std::string>("captioner.variant") == "tgm");
}

TEST_CASE("config rejects unknown keys, wrong types and bad ranges") {
  PipelineConfig c;
  CHECK_THROWS_AS(c.set("captioner.hiden", "8"), Error);
  CHECK_THROWS_AS(c.merge_json_text(R"({"topics": {"k": 3}})"), Error);
  CHECK_THROWS_AS(c.merge_json_text(R"({"extra": 1})"), Error);
  CHECK_THROWS_AS(c.set("captioner.hidden", "8.5"), Error);
  CHECK_THROWS_AS(c.set("captioner.hidden", "\"eight\""), Error);
  CHECK_THROWS_AS(c.set("captioner.hidden", "0"), Error);
  CHECK_THROWS_AS(c.set("captioner.dropout", "1.0"), Error);
  CHECK_THROWS_AS(c.set("captioner.variant", "lstm"), Error);
  CHECK_THROWS_AS(c.set("topics", "3"), Error);
  CHECK_THROWS_AS(c.merge_json_text("{oops"), Error);
  CHECK_THROWS_AS(c.set("ablate.k_list", "[10, -1]"), Error);
  // a failed update leaves the old value in place
  CHECK(c.get<int>("captioner.hidden") == 512);

  c.set("captioner.learning_rate", "1");
  CHECK(c.get<double>("captioner.learning_rate") == 1.0);
  c.set("paths.corpus", "123");
  CHECK(c.get<std::string>("paths.corpus") == "123");
  c.set("captioner.variant", "tce");
  CHECK(c.get<std::string>("captioner.variant") == "tce");
}

TEST_CASE("cross-field rules are checked before running") {
  PipelineConfig c;
  c.set("topics.iterations", "100");
  CHECK_THROWS_AS(c.check(), Error);
  c.set("topics.burn_in", "20");
  CHECK_NOTHROW(c.check());
  c.set("synth.val_fraction", "0.5");
  c.set("synth.test_fraction", "0.5");
  CHECK_THROWS_AS(run_command("synth", c), Error);
}

TEST_CASE("config files") {
  const auto path = fs::temp_directory_path() / "tgc_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"seed": 9, "captioner": {"variant": "tcd"}})";
  }
  const auto c = PipelineConfig::load(path.string());
  CHECK(c.get<int>("seed") == 9);
  CHECK(c.get<std::string>("captioner.variant") == "tcd");
  CHECK(c.get<int>("captioner.hidden") == 512);
  PipelineConfig d;
  d.merge_json_text(c.to_json_text());
  CHECK(d.values() == c.values());
  fs::remove(path);
  CHECK_THROWS_AS(PipelineConfig::load(path.string()), Error);
  CHECK_THROWS_AS(run_command("no-such-command", c), Error);
}

TEST_CASE("worker count") {
  PipelineConfig c;
  c.set("workers", "3");
  CHECK(resolve_workers(c) == 3);
  c.set("workers", "0");
  ::setenv("TGC_WORKERS", "5", 1);
  CHECK(resolve_workers(c) == 5);
  ::setenv("TGC_WORKERS", "five", 1);
  CHECK_THROWS_AS(resolve_workers(c), Error);
  ::unsetenv("TGC_WORKERS");
  CHECK(resolve_workers(c) == 1);
}

TEST_CASE("parallel_for fills every slot and rethrows") {
  for (std::size_t workers : {1u, 4u}) {
    std::vector<int> out(100, 0);
    parallel_for(out.size(), workers, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
    std::atomic<int> calls = 0;
    CHECK_THROWS_AS(parallel_for(10, workers,
                                 [&](std::size_t i) {
                                   ++calls;
                                   if (i == 3) fail(ErrorCode::kNumeric, "boom");
                                 }),
                    Error);
  }
}

TEST_CASE("topic files validate their rows") {
  const auto path = (fs::temp_directory_path() / "tgc_topics_test.jsonl").string();
  save_topic_file(path, {{"a", {0.25, 0.75}, {"general"}}, {"b", {1.0, 0.0}, {}}});
  const auto rows = load_topic_file(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].topics == std::vector<double>{0.25, 0.75});
  CHECK(rows[0].sources == std::vector<std::string>{"general"});
  CHECK(topic_map(rows).at("b") == std::vector<double>{1.0, 0.0});

  auto write = [&](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };
  write(R"({"video_id": "a", "topics": [0.5, 0.6]})" "\n");
  CHECK_THROWS_AS(load_topic_file(path), Error);
  write(R"({"video_id": "a", "topics": [0.5, 0.5]})" "\n" R"({"video_id": "b", "topics": [1.0]})" "\n");
  CHECK_THROWS_AS(load_topic_file(path), Error);
  write(R"({"video_id": "a", "topics": [-0.5, 1.5]})" "\n");
  CHECK_THROWS_AS(load_topic_file(path), Error);
  CHECK_THROWS_AS(topic_map({{"a", {1.0}, {}}, {"a", {1.0}, {}}}), Error);
  fs::remove(path);
}

TEST_CASE("captions files round trip") {
  const auto path = (fs::temp_directory_path() / "tgc_captions_test.jsonl").string();
  save_captions(path, {{"v1", "a dog runs", -3.25, "tgm"}, {"v2", "", -0.5, "vanilla"}});
  const auto rows = load_captions(path);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].caption == "a dog runs");
  CHECK(rows[0].log_prob == -3.25);
  CHECK(rows[1].caption.empty());
  CHECK(rows[1].variant == "vanilla");
  fs::remove(path);
}

TEST_CASE("full pipeline runs and is reproducible") {
  Workspace w("tgc_pipeline_test");
  const std::vector<std::string> chain = {"synth", "mine-topics", "show-topics", "cooccurrence",
                                          "train-predictor", "predict-topics", "train-captioner",
                                          "caption", "evaluate"};
  for (const auto& cmd : chain) {
    INFO(cmd);
    CHECK_NOTHROW(w.run(cmd));
  }
  const std::vector<std::string> artifacts = {"corpus", "topic_model", "predictor", "predictions",
                                              "captioner", "captions", "report"};
  std::vector<std::string> first;
  for (const auto& a : artifacts) first.push_back(slurp(w.dir / a));
  CHECK(fs::exists(w.dir / "cooccurrence.json"));

  w.config.set("workers", "4");
  for (const auto& cmd : chain) w.run(cmd);
  for (std::size_t i = 0; i < artifacts.size(); ++i) {
    INFO(artifacts[i]);
    CHECK(slurp(w.dir / artifacts[i]) == first[i]);
  }

  w.config.set("seed", "2");
  w.run("synth");
  CHECK(slurp(w.dir / "corpus") != first[0]);
}

TEST_CASE("every topic source trains a captioner") {
  Workspace w("tgc_pipeline_sources");
  for (const auto& cmd : {"synth", "mine-topics", "train-predictor", "predict-topics"}) w.run(cmd);
  w.config.set("paths.topics_file", w.config.path("truth_topics"));
  w.config.set("topics.num_categories", "3");
  w.run("train-predictor");
  for (const char* source : {"teacher", "predicted", "annotated", "category"}) {
    INFO(source);
    w.config.set("captioner.topic_source", source);
    CHECK_NOTHROW(w.run("train-captioner"));
    CHECK_NOTHROW(w.run("caption"));
  }
  w.config.set("captioner.variant", "vanilla");
  CHECK_NOTHROW(w.run("train-captioner"));
  CHECK_NOTHROW(w.run("caption"));
}

TEST_CASE("missing inputs fail with io errors") {
  Workspace w("tgc_pipeline_missing");
  try {
    w.run("mine-topics");
    FAIL("ran without a corpus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("ablation writes one report per topic count") {
  Workspace w("tgc_pipeline_ablate");
  w.run("synth");
  w.config.set("ablate.k_list", "[2, 3]");
  const auto summary = run_command("ablate-topics", w.config);
  CHECK(fs::exists(w.dir / "report_K2.json"));
  CHECK(fs::exists(w.dir / "report_K3.json"));
  CHECK(summary.find("K") != std::string::npos);
}

TEST_CASE("gradcheck command") {
  PipelineConfig c;
  const auto out = run_command("gradcheck", c);
  CHECK(out.find("sequence_loss/tgm") != std::string::npos);
}
