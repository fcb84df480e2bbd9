// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "tgc/checkpoint.hpp"
#include "tgc/gradcheck.hpp"

using namespace tgc;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.metadata = {{"kind", "test"}, {"values", {1, 2, 3}}};
  c.add("scalar", Tensor({1}, std::vector<double>{-0.0}));
  c.add("odd", Tensor({2, 3}, std::vector<double>{0.1, 1e-310, -2.5, std::numeric_limits<double>::max(),
                                                   std::nextafter(1.0, 2.0), 3.0}));
  return c;
}

void put_u32(std::string& bytes, std::size_t at, std::uint32_t v) { std::memcpy(bytes.data() + at, &v, 4); }

CaptionerBundle small_captioner(Variant v) {
  CaptionerConfig cfg;
  cfg.variant = v;
  cfg.feature_dim = 5;
  cfg.num_topics = 3;
  cfg.vocab_size = 8;
  cfg.hidden = 6;
  cfg.factors = 4;
  cfg.init_scale = 0.7;
  Rng rng(3);
  CaptionerBundle b;
  b.params = init_caption_model(cfg, rng);
  b.vocab = Vocabulary::from_tokens({"<bos>", "<eos>", "<unk>", "a", "dog", "runs", "on", "grass"});
  b.manifest = FeatureManifest({{"visual", 2}, {"motion", 3}});
  b.topic_source = "predicted";
  return b;
}

}  // namespace

TEST_CASE("serialized layout") {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  CHECK(bytes.substr(0, 4) == "TGC1");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1);
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto c = sample_checkpoint();
  const auto path = temp_path("tgc_ckpt_roundtrip.tgc");
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  CHECK(back.metadata == c.metadata);
  REQUIRE(back.tensors.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.tensors[i].first == c.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == c.tensors[i].second.shape());
    for (std::size_t j = 0; j < c.tensors[i].second.size(); ++j)
      CHECK(std::bit_cast<std::uint64_t>(back.tensors[i].second[j]) ==
            std::bit_cast<std::uint64_t>(c.tensors[i].second[j]));
  }
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(c));
  CHECK(back.has("odd"));
  CHECK_FALSE(back.has("missing"));
  CHECK_THROWS_AS(back.tensor("missing"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are refused") {
  const auto good = serialize_checkpoint(sample_checkpoint());

  auto bad_magic = good;
  bad_magic[0] = 'X';
  try {
    deserialize_checkpoint(bad_magic);
    FAIL("accepted a bad magic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFormat);
    CHECK(std::string(e.what()).find("TGC1") != std::string::npos);
  }

  auto bad_version = good;
  put_u32(bad_version, 4, 7);
  try {
    deserialize_checkpoint(bad_version);
    FAIL("accepted a future version");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kVersion);
    const std::string msg = e.what();
    CHECK(msg.find("expected 1") != std::string::npos);
    CHECK(msg.find("found 7") != std::string::npos);
  }

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1})
    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, cut)), Error);
  CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), Error);
  CHECK_THROWS_AS(load_checkpoint(temp_path("tgc_does_not_exist.tgc")), Error);
}

TEST_CASE("captioner bundles round trip and decode identically") {
  for (Variant v : kAllVariants) {
    const auto b = small_captioner(v);
    const auto path = temp_path("tgc_ckpt_captioner.tgc");
    save_checkpoint(path, pack_captioner(b, nlohmann::json::object()));
    const auto back = unpack_captioner(load_checkpoint(path));
    std::filesystem::remove(path);

    INFO(variant_name(v));
    CHECK(back.params.config.variant == v);
    CHECK(back.vocab.tokens() == b.vocab.tokens());
    CHECK(back.manifest == b.manifest);
    CHECK(back.topic_source == "predicted");
    CHECK(flatten(back.params) == flatten(b.params));

    const std::vector<double> f = {0.3, -1.0, 0.2, 0.9, -0.4};
    const std::vector<double> z = v == Variant::kVanilla ? std::vector<double>{} : std::vector<double>{0.5, 0.3, 0.2};
    const auto h1 = beam_search(b.params, f, z, 3);
    const auto h2 = beam_search(back.params, f, z, 3);
    CHECK(h1.tokens == h2.tokens);
    CHECK(std::bit_cast<std::uint64_t>(h1.log_prob) == std::bit_cast<std::uint64_t>(h2.log_prob));
    CHECK(back.vocab.decode(h2.tokens) == b.vocab.decode(h1.tokens));
  }
}

TEST_CASE("captioner bundles reject mismatched shapes and kinds") {
  auto ckpt = pack_captioner(small_captioner(Variant::kTgm), nlohmann::json::object());
  for (auto& [name, t] : ckpt.tensors)
    if (name == "embed") t = Tensor::matrix(3, 3);
  CHECK_THROWS_AS(unpack_captioner(ckpt), Error);

  auto wrong_kind = pack_captioner(small_captioner(Variant::kTgm), nlohmann::json::object());
  wrong_kind.metadata["kind"] = "predictor";
  CHECK_THROWS_AS(unpack_captioner(wrong_kind), Error);
}

TEST_CASE("topic and predictor bundles round trip") {
  SyntheticOptions so;
  so.videos_per_topic = 10;
  so.captions_per_video = 5;
  const auto c = generate_synthetic_corpus(so);
  TopicBundle tb;
  tb.vocab = Vocabulary::build(c.records, 2);
  tb.stopwords = {"zz", "aa"};
  std::vector<std::string> ids;
  std::vector<BagOfWords> docs;
  for (const auto& r : c.records)
    if (r.split == Split::kTrain) {
      ids.push_back(r.video_id);
      docs.push_back(video_document(r, tb.vocab, tb.stopwords));
    }
  LdaOptions lo;
  lo.topics = 3;
  lo.schedule = {20, 5, 5};
  tb.model = lda_fit(ids, docs, tb.vocab.size(), lo);

  const auto back = unpack_topics(deserialize_checkpoint(serialize_checkpoint(pack_topics(tb, {{"seed", 1}}))));
  CHECK(back.vocab.tokens() == tb.vocab.tokens());
  CHECK(back.stopwords == tb.stopwords);
  CHECK(back.model.beta == tb.model.beta);
  CHECK(back.model.theta == tb.model.theta);
  CHECK(back.model.doc_ids == tb.model.doc_ids);
  CHECK(back.model.alpha == tb.model.alpha);
  CHECK(teacher_distribution(c.records[0], back.model) == teacher_distribution(c.records[0], tb.model));
  BagOfWords bag = docs[1];
  Rng r1(4), r2(4);
  CHECK(lda_infer(bag, back.model, InferSchedule{}, r1) == lda_infer(bag, tb.model, InferSchedule{}, r2));

  Rng rng(2);
  PredictorBundle pb;
  pb.manifest = c.manifest;
  pb.general = init_mlp(c.manifest.total_dim(), 4, 3, rng);
  pb.category = init_mlp(c.manifest.total_dim(), 4, 3, rng);
  pb.num_categories = 3;
  const auto pback = unpack_predictor(deserialize_checkpoint(serialize_checkpoint(pack_predictor(pb, {}))));
  CHECK(pback.manifest == pb.manifest);
  CHECK(flatten(pback.general) == flatten(pb.general));
  REQUIRE(pback.category.has_value());
  CHECK(flatten(*pback.category) == flatten(*pb.category));
  CHECK(pback.num_categories == 3);

  pb.category.reset();
  CHECK_FALSE(unpack_predictor(deserialize_checkpoint(serialize_checkpoint(pack_predictor(pb, {})))).category);
}
