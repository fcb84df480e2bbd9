// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors
//
// Runs the tgc executable end to end. TGC_CLI_PATH is set by the build.

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "tgc/pipeline.hpp"
#include "tgc/tgc.h"

namespace fs = std::filesystem;
using namespace tgc;

namespace {

struct Cli {
  fs::path dir;
  std::string last_stderr;

  explicit Cli(const char* name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream cfg(dir / "config.json");
    cfg << R"({
      "paths": {"output_dir": ")" << dir.string() << R"("},
      "synth": {"videos_per_topic": 15, "captions_per_video": 4, "vocab_size": 60},
      "topics": {"K": 3, "iterations": 60, "burn_in": 20, "thin": 10},
      "predictor": {"hidden": 8, "epochs": 5, "learning_rate": 0.01},
      "captioner": {"hidden": 8, "factors": 4, "epochs": 3, "learning_rate": 0.01, "max_length": 10}
    })";
  }
  ~Cli() { fs::remove_all(dir); }

  /// Runs `tgc <args>` inside the scratch directory and returns the exit code.
  int run(const std::string& args) {
    const auto err = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && '" TGC_CLI_PATH "' --config config.json " + args +
                            " > stdout.txt 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    last_stderr = ss.str();
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("synthetic corpus through evaluation") {
  Cli cli("tgc_cli_e2e");
  for (const char* cmd : {"synth", "mine-topics", "show-topics --words 5", "cooccurrence --categories 3",
                          "train-predictor", "predict-topics", "train-captioner --variant tgm", "caption",
                          "evaluate"}) {
    INFO(cmd);
    CHECK(cli.run(cmd) == 0);
    CHECK(cli.last_stderr.empty());
  }
  CHECK(fs::exists(cli.dir / "report.json"));
  CHECK(slurp(cli.dir / "stdout.txt").find("BLEU") != std::string::npos);
}

TEST_CASE("beam width one reproduces greedy decoding") {
  Cli cli("tgc_cli_greedy");
  REQUIRE(cli.run("synth") == 0);
  REQUIRE(cli.run("--topics-file truth_topics.jsonl train-captioner --topic-source annotated --variant tgm") == 0);
  REQUIRE(cli.run("--topics-file truth_topics.jsonl caption --beam-width 1") == 0);

  const auto bundle = unpack_captioner(load_checkpoint((cli.dir / "captioner.tgc").string()));
  const auto manifest = FeatureManifest::load((cli.dir / "manifest.json").string());
  const auto records = load_corpus((cli.dir / "corpus.jsonl").string(), manifest);
  const auto truth = topic_map(load_topic_file((cli.dir / "truth_topics.jsonl").string()));
  std::map<std::string, std::string> produced;
  for (const auto& row : load_captions((cli.dir / "captions.jsonl").string())) produced[row.video_id] = row.caption;
  REQUIRE(!produced.empty());
  for (const auto& r : records) {
    if (r.split != Split::kTest) continue;
    const Decoder d(bundle.params, assemble_features(r, bundle.manifest), truth.at(r.video_id));
    CHECK(produced.at(r.video_id) == bundle.vocab.decode(greedy_decode(d, 10).tokens));
  }
}

TEST_CASE("topic-count sweep writes one report per K") {
  Cli cli("tgc_cli_ablate");
  REQUIRE(cli.run("synth") == 0);
  CHECK(cli.run("ablate-topics --K-list 2,3,4 --epochs 1") == 0);
  for (int k : {2, 3, 4}) CHECK(fs::exists(cli.dir / ("report_K" + std::to_string(k) + ".json")));
}

TEST_CASE("failures exit nonzero with one diagnostic line") {
  Cli cli("tgc_cli_errors");
  REQUIRE(cli.run("synth") == 0);
  REQUIRE(cli.run("train-captioner --topic-source teacher") == TGC_ERR_IO);  // no topic model yet
  REQUIRE(cli.run("mine-topics") == 0);
  REQUIRE(cli.run("train-captioner --topic-source teacher") == 0);

  {
    std::fstream f(cli.dir / "captioner.tgc", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XGC1", 4);
  }
  CHECK(cli.run("caption") == TGC_ERR_FORMAT);
  CHECK(cli.last_stderr.find("TGC1") != std::string::npos);
  CHECK(std::count(cli.last_stderr.begin(), cli.last_stderr.end(), '\n') == 1);

  CHECK(cli.run("--corpus missing.jsonl mine-topics") == TGC_ERR_IO);
  CHECK(cli.run("--set captioner.nope=1 caption") == TGC_ERR_INVALID_ARGUMENT);
  CHECK(cli.run("--set broken caption") == TGC_ERR_INVALID_ARGUMENT);
  CHECK(cli.run("caption --beam-width 0") == TGC_ERR_INVALID_ARGUMENT);
  CHECK(cli.run("train-captioner --variant lstm") == TGC_ERR_INVALID_ARGUMENT);
  CHECK(cli.run("fly") != 0);
  CHECK(cli.run("") != 0);
}
