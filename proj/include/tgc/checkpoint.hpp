// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tgc/captioner.hpp"
#include "tgc/corpus.hpp"
#include "tgc/numerics.hpp"
#include "tgc/predictor.hpp"
#include "tgc/topics.hpp"

namespace tgc {

// Binary layout, all integers little-endian:
//   "TGC1"                       4 bytes
//   format version               u32
//   metadata length, metadata    u64, UTF-8 JSON
//   tensor count                 u64
//   per tensor: name length u32, name, rank u32, dims u64[rank],
//               values as IEEE-754 binary64, row-major
inline constexpr char kCheckpointMagic[4] = {'T', 'G', 'C', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;  // kFormat when missing
  bool has(const std::string& name) const;
  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TopicBundle {
  TopicModel model;
  Vocabulary vocab;
  StopwordSet stopwords;
};

Checkpoint pack_topics(const TopicBundle& bundle, const nlohmann::json& config);
TopicBundle unpack_topics(const Checkpoint& ckpt);

struct PredictorBundle {
  FeatureManifest manifest;
  MlpParams general;
  std::optional<MlpParams> category;
  std::size_t num_categories = 0;
};

Checkpoint pack_predictor(const PredictorBundle& bundle, const nlohmann::json& config);
PredictorBundle unpack_predictor(const Checkpoint& ckpt);

struct CaptionerBundle {
  CaptionModelParams params;
  Vocabulary vocab;
  FeatureManifest manifest;
  std::string topic_source;
};

Checkpoint pack_captioner(const CaptionerBundle& bundle, const nlohmann::json& config);
CaptionerBundle unpack_captioner(const Checkpoint& ckpt);

}  // namespace tgc
