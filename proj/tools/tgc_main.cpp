// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors
//
// Command-line front end. Every flag becomes a dotted config key applied on
// top of --config; the command itself runs through the C API.

#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "tgc/tgc.h"

namespace {

struct Flag {
  std::string name;  // without dashes
  std::string key;   // dotted config key
  std::string help;
};

// Options accepted by every subcommand.
const std::vector<Flag> kCommonFlags = {
    {"seed", "seed", "global random seed"},
    {"workers", "workers", "threads for per-video inference (default: TGC_WORKERS or 1)"},
    {"corpus", "paths.corpus", "corpus JSONL file"},
    {"manifest", "paths.manifest", "feature manifest JSON"},
    {"stopwords", "paths.stopwords", "stopword list, one token per line"},
    {"topic-model", "paths.topic_model", "topic model checkpoint"},
    {"predictor", "paths.predictor", "topic predictor checkpoint"},
    {"predictions", "paths.predictions", "predicted topics JSONL"},
    {"topics-file", "paths.topics_file", "annotated per-video topics JSONL"},
    {"captioner", "paths.captioner", "captioner checkpoint"},
    {"captions", "paths.captions", "generated captions JSONL"},
    {"report", "paths.report", "metrics report JSON"},
    {"truth-topics", "paths.truth_topics", "ground-truth mixtures written by synth"},
    {"out-dir", "paths.output_dir", "directory for tables and sweep reports"},
    {"min-count", "vocab.min_count", "minimum caption word count"},
};

// Options that only make sense for some subcommands.
const std::map<std::string, std::vector<Flag>> kCommandFlags = {
    {"synth",
     {{"topics", "synth.topics", "number of generating topics"},
      {"vocab-size", "synth.vocab_size", "synthetic vocabulary size"},
      {"videos-per-topic", "synth.videos_per_topic", "videos generated per topic"},
      {"captions-per-video", "synth.captions_per_video", "captions per video"},
      {"style", "synth.style", "caption style: bag|template"},
      {"feature-noise", "synth.feature_noise", "feature noise scale"}}},
    {"mine-topics",
     {{"K", "topics.K", "number of topics"},
      {"alpha", "topics.alpha", "document-topic prior (0 = 50/K)"},
      {"eta", "topics.eta", "topic-word prior"},
      {"iterations", "topics.iterations", "Gibbs sweeps"},
      {"burn-in", "topics.burn_in", "sweeps before samples are kept"},
      {"thin", "topics.thin", "keep every n-th sweep"}}},
    {"show-topics", {{"words", "topics.show_words", "words per topic"}}},
    {"cooccurrence", {{"categories", "topics.num_categories", "number of categories"}}},
    {"train-predictor",
     {{"hidden", "predictor.hidden", "hidden units"},
      {"epochs", "predictor.epochs", "training epochs"},
      {"batch-size", "predictor.batch_size", "mini-batch size"},
      {"lr", "predictor.learning_rate", "Adam learning rate"}}},
    {"predict-topics", {}},
    {"train-captioner",
     {{"variant", "captioner.variant", "vanilla|tce|tcd|tead|temd|tgm"},
      {"topic-source", "captioner.topic_source", "teacher|predicted|annotated|category"},
      {"hidden", "captioner.hidden", "LSTM and embedding size"},
      {"factors", "captioner.factors", "TGM factor count"},
      {"epochs", "captioner.epochs", "training epochs"},
      {"batch-size", "captioner.batch_size", "mini-batch size"},
      {"lr", "captioner.learning_rate", "Adam learning rate"},
      {"dropout", "captioner.dropout", "dropout rate"},
      {"max-length", "captioner.max_length", "maximum caption length"}}},
    {"caption",
     {{"beam-width", "captioner.beam_width", "beam width"},
      {"max-length", "captioner.max_length", "maximum caption length"},
      {"split", "captioner.split", "train|val|test"}}},
    {"evaluate", {}},
    {"gradcheck", {}},
    {"ablate-topics",
     {{"K-list", "ablate.k_list", "comma-separated topic counts, e.g. 10,20,30"},
      {"variant", "captioner.variant", "captioner variant"},
      {"epochs", "captioner.epochs", "captioner training epochs"}}},
};

std::string k_list_json(const std::string& text) {
  std::string out = "[";
  for (char c : text) out += c == ' ' ? std::string() : std::string(1, c);
  return out + "]";
}

int fail_with(tgc_status status) {
  std::fprintf(stderr, "tgc: error: %s\n", tgc_last_error());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-guided video captioning"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config key: key=value (repeatable)");

  std::map<std::string, std::string> values;  // config key -> raw text
  for (const auto& f : kCommonFlags) app.add_option("--" + f.name, values[f.key], f.help);

  std::map<std::string, CLI::App*> subs;
  std::map<std::string, std::map<std::string, std::string>> sub_values;
  for (size_t i = 0; i < tgc_command_count(); ++i) {
    const std::string name = tgc_command_name(i);
    auto* sub = app.add_subcommand(name);
    subs[name] = sub;
    const auto it = kCommandFlags.find(name);
    if (it == kCommandFlags.end()) continue;
    for (const auto& f : it->second) sub->add_option("--" + f.name, sub_values[name][f.key], f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  tgc_config* config = nullptr;
  tgc_status st = config_path.empty() ? tgc_config_create(&config) : tgc_config_load(config_path.c_str(), &config);
  if (st != TGC_OK) return fail_with(st);

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  std::vector<std::pair<std::string, std::string>> sets;
  for (const auto& f : kCommonFlags)
    if (app.get_option("--" + f.name)->count() > 0) sets.emplace_back(f.key, values[f.key]);
  for (const auto& f : kCommandFlags.at(command))
    if (subs[command]->get_option("--" + f.name)->count() > 0) {
      const auto& text = sub_values[command][f.key];
      sets.emplace_back(f.key, f.key == "ablate.k_list" ? k_list_json(text) : text);
    }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "tgc: error: --set expects key=value, got '%s'\n", o.c_str());
      tgc_config_free(config);
      return TGC_ERR_INVALID_ARGUMENT;
    }
    sets.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  for (const auto& [key, text] : sets) {
    st = tgc_config_set(config, key.c_str(), text.c_str());
    if (st != TGC_OK) {
      tgc_config_free(config);
      return fail_with(st);
    }
  }

  char* summary = nullptr;
  st = tgc_run(config, command.c_str(), &summary);
  tgc_config_free(config);
  if (st != TGC_OK) return fail_with(st);
  std::fputs(summary, stdout);
  tgc_string_free(summary);
  return 0;
}
