// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tgc {

using nlohmann::json;

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  fail(ErrorCode::kFormat, "checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <class T>
  void integer(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
  void real(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) fail(ErrorCode::kFormat, "checkpoint is truncated");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T integer() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double real() { return std::bit_cast<double>(integer<std::uint64_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.integer<std::uint32_t>(kCheckpointVersion);
  const std::string meta = ckpt.metadata.dump();
  w.integer<std::uint64_t>(meta.size());
  w.bytes(meta.data(), meta.size());
  w.integer<std::uint64_t>(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.integer<std::uint64_t>(d);
    for (double v : t.values()) w.real(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    std::string found = bytes.substr(0, std::min<std::size_t>(4, bytes.size()));
    for (char& c : found)
      if (static_cast<unsigned char>(c) < 0x20 || static_cast<unsigned char>(c) > 0x7E) c = '?';
    fail(ErrorCode::kFormat, "not a checkpoint: expected magic 'TGC1', found '" + found + "'");
  }
  r.bytes(4);
  const auto version = r.integer<std::uint32_t>();
  if (version != kCheckpointVersion)
    fail(ErrorCode::kVersion, "incompatible checkpoint version: expected " +
                                  std::to_string(kCheckpointVersion) + ", found " +
                                  std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = r.integer<std::uint64_t>();
  try {
    ckpt.metadata = json::parse(r.bytes(meta_len));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = r.integer<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.integer<std::uint32_t>();
    std::string name = r.bytes(name_len);
    const auto rank = r.integer<std::uint32_t>();
    if (rank == 0 || rank > 8) fail(ErrorCode::kFormat, "tensor '" + name + "' has a bad rank");
    std::vector<std::size_t> shape;
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.integer<std::uint64_t>();
      if (dim == 0 || dim > (std::uint64_t{1} << 40))
        fail(ErrorCode::kFormat, "tensor '" + name + "' has a bad dimension");
      shape.push_back(static_cast<std::size_t>(dim));
      n *= dim;
    }
    r.need(static_cast<std::size_t>(n) * 8);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (double& v : data) v = r.real();
    ckpt.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) fail(ErrorCode::kFormat, "trailing bytes after checkpoint tensors");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

// ----------------------------------------------------------------------------

namespace {

void expect_kind(const Checkpoint& c, const char* kind) {
  const auto it = c.metadata.find("kind");
  if (it == c.metadata.end() || !it->is_string() || it->get<std::string>() != kind)
    fail(ErrorCode::kFormat, std::string("checkpoint does not hold a ") + kind);
}

template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint metadata is malformed: ") + e.what());
  }
}

std::vector<std::string> sorted_stopwords(const StopwordSet& s) {
  std::vector<std::string> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

Checkpoint pack_topics(const TopicBundle& b, const json& config) {
  Checkpoint c;
  const TopicModel& m = b.model;
  c.metadata = {{"kind", "topic_model"},
                {"num_topics", m.num_topics},
                {"vocab_size", m.vocab_size},
                {"alpha", m.alpha},
                {"eta", m.eta},
                {"retained_samples", m.retained_samples},
                {"doc_ids", m.doc_ids},
                {"vocabulary", b.vocab.tokens()},
                {"stopwords", sorted_stopwords(b.stopwords)},
                {"config", config}};
  c.add("topic_word", m.topic_word);
  if (m.num_docs() > 0) {
    c.add("doc_topic", m.doc_topic);
    c.add("theta", m.theta);
  }
  c.add("topic_total", m.topic_total);
  c.add("beta", m.beta);
  return c;
}

TopicBundle unpack_topics(const Checkpoint& c) {
  expect_kind(c, "topic_model");
  return guarded([&] {
    const auto& md = c.metadata;
    TopicBundle b;
    b.vocab = Vocabulary::from_tokens(md.at("vocabulary").get<std::vector<std::string>>());
    for (auto& w : md.at("stopwords").get<std::vector<std::string>>()) b.stopwords.insert(w);
    auto ids = md.at("doc_ids").get<std::vector<std::string>>();
    const bool docs = !ids.empty();
    b.model = restore_topic_model(
        md.at("num_topics").get<std::size_t>(), md.at("vocab_size").get<std::size_t>(),
        md.at("alpha").get<double>(), md.at("eta").get<double>(), std::move(ids),
        c.tensor("topic_word"), docs ? c.tensor("doc_topic") : Tensor(),
        c.tensor("topic_total"), c.tensor("beta"), docs ? c.tensor("theta") : Tensor(),
        md.at("retained_samples").get<std::size_t>());
    if (b.model.vocab_size != b.vocab.size())
      fail(ErrorCode::kFormat, "topic model vocabulary size does not match its word list");
    return b;
  });
}

namespace {

void add_mlp(Checkpoint& c, const std::string& prefix, const MlpParams& p) {
  c.add(prefix + ".w1", p.w1);
  c.add(prefix + ".b1", p.b1);
  c.add(prefix + ".w2", p.w2);
  c.add(prefix + ".b2", p.b2);
}

MlpParams get_mlp(const Checkpoint& c, const std::string& prefix) {
  MlpParams p{c.tensor(prefix + ".w1"), c.tensor(prefix + ".b1"), c.tensor(prefix + ".w2"),
              c.tensor(prefix + ".b2")};
  const std::size_t H = p.w1.rows(), O = p.w2.rows();
  if (p.w1.rank() != 2 || p.w2.rank() != 2 || p.b1.size() != H || p.w2.cols() != H ||
      p.b2.size() != O)
    fail(ErrorCode::kFormat, "inconsistent MLP shapes under '" + prefix + "'");
  return p;
}

}  // namespace

Checkpoint pack_predictor(const PredictorBundle& b, const json& config) {
  Checkpoint c;
  c.metadata = {{"kind", "predictor"},
                {"manifest", json::parse(b.manifest.to_json_text())},
                {"manifest_order", json::array()},
                {"num_topics", b.general.output_dim()},
                {"num_categories", b.num_categories},
                {"has_category", b.category.has_value()},
                {"config", config}};
  for (const auto& [name, dim] : b.manifest.entries())
    c.metadata["manifest_order"].push_back({name, dim});
  add_mlp(c, "general", b.general);
  if (b.category) add_mlp(c, "category", *b.category);
  return c;
}

namespace {

FeatureManifest manifest_from_metadata(const json& md) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& e : md.at("manifest_order"))
    entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::size_t>());
  return FeatureManifest(std::move(entries));
}

json manifest_to_metadata(const FeatureManifest& m) {
  json arr = json::array();
  for (const auto& [name, dim] : m.entries()) arr.push_back({name, dim});
  return arr;
}

}  // namespace

PredictorBundle unpack_predictor(const Checkpoint& c) {
  expect_kind(c, "predictor");
  return guarded([&] {
    PredictorBundle b;
    b.manifest = manifest_from_metadata(c.metadata);
    b.general = get_mlp(c, "general");
    b.num_categories = c.metadata.at("num_categories").get<std::size_t>();
    if (c.metadata.at("has_category").get<bool>()) b.category = get_mlp(c, "category");
    if (b.general.input_dim() != b.manifest.total_dim())
      fail(ErrorCode::kFormat, "predictor input size does not match its manifest");
    return b;
  });
}

Checkpoint pack_captioner(const CaptionerBundle& b, const json& config) {
  const auto& cfg = b.params.config;
  Checkpoint c;
  c.metadata = {{"kind", "captioner"},
                {"variant", std::string(variant_name(cfg.variant))},
                {"feature_dim", cfg.feature_dim},
                {"num_topics", cfg.num_topics},
                {"vocab_size", cfg.vocab_size},
                {"hidden", cfg.hidden},
                {"factors", cfg.factors},
                {"max_length", cfg.max_length},
                {"dropout", cfg.dropout},
                {"init_scale", cfg.init_scale},
                {"forget_bias", cfg.forget_bias},
                {"topic_source", b.topic_source},
                {"vocabulary", b.vocab.tokens()},
                {"manifest_order", manifest_to_metadata(b.manifest)},
                {"config", config}};
  for (const auto& [name, t] : b.params.named_tensors()) c.add(name, *t);
  return c;
}

CaptionerBundle unpack_captioner(const Checkpoint& c) {
  expect_kind(c, "captioner");
  return guarded([&] {
    const auto& md = c.metadata;
    CaptionerBundle b;
    CaptionerConfig cfg;
    cfg.variant = parse_variant(md.at("variant").get<std::string>());
    cfg.feature_dim = md.at("feature_dim").get<std::size_t>();
    cfg.num_topics = md.at("num_topics").get<std::size_t>();
    cfg.vocab_size = md.at("vocab_size").get<std::size_t>();
    cfg.hidden = md.at("hidden").get<std::size_t>();
    cfg.factors = md.at("factors").get<std::size_t>();
    cfg.max_length = md.at("max_length").get<std::size_t>();
    cfg.dropout = md.at("dropout").get<double>();
    cfg.init_scale = md.at("init_scale").get<double>();
    cfg.forget_bias = md.at("forget_bias").get<double>();
    cfg.validate();
    b.params.config = cfg;
    for (auto& [name, t] : b.params.named_tensors()) *t = c.tensor(name);
    // Shapes must agree with a freshly initialized model of the same config.
    Rng probe(0);
    const auto reference = init_caption_model(cfg, probe);
    const auto want = reference.named_tensors();
    const auto got = b.params.named_tensors();
    for (std::size_t i = 0; i < want.size(); ++i)
      if (!want[i].second->same_shape(*got[i].second))
        fail(ErrorCode::kFormat, "captioner tensor '" + want[i].first + "' has the wrong shape");
    b.vocab = Vocabulary::from_tokens(md.at("vocabulary").get<std::vector<std::string>>());
    if (b.vocab.size() != cfg.vocab_size)
      fail(ErrorCode::kFormat, "captioner vocabulary size does not match its word list");
    b.manifest = manifest_from_metadata(md);
    b.topic_source = md.at("topic_source").get<std::string>();
    return b;
  });
}

}  // namespace tgc
