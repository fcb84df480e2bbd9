// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tgc/captioner.hpp"
#include "tgc/gradcheck.hpp"

using namespace tgc;

namespace {

CaptionerConfig small_config(Variant v, std::size_t vocab = 12) {
  CaptionerConfig c;
  c.variant = v;
  c.feature_dim = 4;
  c.num_topics = 3;
  c.vocab_size = vocab;
  c.hidden = 6;
  c.factors = 5;
  c.dropout = 0.0;
  c.init_scale = 0.5;
  return c;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

std::vector<double> topics_for(Variant v, Rng& rng) {
  if (v == Variant::kVanilla) return {};
  return rng.dirichlet(std::vector<double>(3, 1.0));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Per-step log-probabilities along a fixed token path.
std::vector<std::vector<double>> trace(const Decoder& d, const std::vector<std::size_t>& path) {
  std::vector<std::vector<double>> out;
  auto state = d.initial_state();
  std::size_t prev = Vocabulary::kBos;
  for (std::size_t tok : path) {
    state = d.advance(state, prev);
    out.push_back(d.log_probs(state));
    prev = tok;
  }
  return out;
}

double path_log_prob(const Decoder& d, const std::vector<std::size_t>& tokens) {
  double lp = 0.0;
  const auto steps = trace(d, tokens);
  for (std::size_t t = 0; t < tokens.size(); ++t) lp += steps[t][tokens[t]];
  return lp;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : kAllVariants) CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("lstm"), Error);
}

TEST_CASE("input widths per variant") {
  auto c = small_config(Variant::kTce);
  CHECK(c.encoder_input_dim() == 4 + 3);
  CHECK(c.step_input_dim() == 6);
  c.variant = Variant::kTcd;
  CHECK(c.encoder_input_dim() == 4);
  CHECK(c.step_input_dim() == 6 + 3);
  Rng rng(1);
  const auto p = init_caption_model(c, rng);
  CHECK(p.lstm_wx.cols() == 9);
  const auto word = random_vector(6, rng), z = random_vector(3, rng);
  CHECK(decoder_input(Variant::kTcd, word, z, {}).size() == 9);
}

TEST_CASE("tgm_compose worked example") {
  const Tensor a({2, 1}, std::vector<double>{1, 2});
  const Tensor b({1, 2}, std::vector<double>{3, 5});
  const Tensor c({1, 2}, std::vector<double>{7, 11});
  CHECK(tgm_compose(std::vector<double>{1, 0}, a, b, c) == Tensor({2, 2}, std::vector<double>{21, 33, 42, 66}));
  CHECK(tgm_compose(std::vector<double>{0, 0}, a, b, c) == Tensor({2, 2}));
  CHECK_THROWS_AS(tgm_compose(std::vector<double>{1, 0, 0}, a, b, c), Error);
  CHECK_THROWS_AS(tgm_compose(std::vector<double>{1, 0}, a, b, Tensor({2, 2})), Error);
}

TEST_CASE("tgm_compose equals the explicit topic-matrix sum") {
  Rng rng(5);
  FactorTriple f{Tensor::matrix(6, 5), Tensor::matrix(5, 3), Tensor::matrix(5, 7)};
  for (Tensor* t : {&f.a, &f.b, &f.c})
    for (double& v : t->values()) v = rng.normal();
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = trial < 3 ? std::vector<double>{double(trial == 0), double(trial == 1), double(trial == 2)}
                             : random_vector(3, rng);
    const auto composed = tgm_compose(z, f.a, f.b, f.c);
    const auto expected = oracle::to_tensor(oracle::topic_sum(f, z));
    CHECK(max_abs_diff(composed.values(), expected.values()) < 1e-9);
  }
}

TEST_CASE("lstm step gate equations") {
  const std::size_t H = 3, I = 2;
  const DecoderState s{{0.3, -0.2, 0.5}, {1.0, -2.0, 0.25}};
  const std::vector<double> x = {0.7, -1.1};

  // zero weights from a zero cell: o = 0.5 and tanh(c') = 0
  const DecoderState fresh{{0.3, -0.2, 0.5}, {0.0, 0.0, 0.0}};
  const auto zero = lstm_step(fresh, x, Tensor::matrix(4 * H, I), Tensor::matrix(4 * H, H), Tensor({4 * H}));
  for (double v : zero.h) CHECK(v == 0.0);
  // with a nonzero cell the forget gate halves it
  const auto halved = lstm_step(s, x, Tensor::matrix(4 * H, I), Tensor::matrix(4 * H, H), Tensor({4 * H}));
  for (std::size_t j = 0; j < H; ++j) CHECK(halved.c[j] == 0.5 * s.c[j]);

  Rng rng(2);
  Tensor wx = Tensor::matrix(4 * H, I), wh = Tensor::matrix(4 * H, H), b({4 * H});
  for (double& v : wx.values()) v = rng.normal();
  for (double& v : wh.values()) v = rng.normal();
  for (std::size_t j = 0; j < H; ++j) b[kForgetGate * H + j] = 50.0;
  const auto next = lstm_step(s, x, wx, wh, b);
  for (std::size_t j = 0; j < H; ++j) {
    auto pre = [&](std::size_t gate) {
      double a = b[gate * H + j];
      for (std::size_t q = 0; q < I; ++q) a += wx(gate * H + j, q) * x[q];
      for (std::size_t q = 0; q < H; ++q) a += wh(gate * H + j, q) * s.h[q];
      return a;
    };
    const double i = sigmoid(pre(kInputGate)), o = sigmoid(pre(kOutputGate)), g = std::tanh(pre(kCellGate));
    CHECK(std::abs(next.c[j] - (s.c[j] + i * g)) < 1e-12);
    CHECK(next.h[j] == doctest::Approx(o * std::tanh(next.c[j])).epsilon(1e-14));
  }
}

TEST_CASE("encoder") {
  Rng rng(3);
  const auto p = init_caption_model(small_config(Variant::kTgm), rng);
  const auto x = encode(p, std::vector<double>(4, 0.0), std::vector<double>{0.2, 0.3, 0.5});
  CHECK(max_abs_diff(x, p.enc_b.values()) == 0.0);
  CHECK_THROWS_AS(encode(p, std::vector<double>(5, 0.0), {}), Error);

  // TCE with zero topics ignores the topic columns
  const auto tce = init_caption_model(small_config(Variant::kTce), rng);
  auto plain = tce;
  plain.config.variant = Variant::kTgm;
  plain.enc_w = Tensor::matrix(6, 4);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) plain.enc_w(r, c) = tce.enc_w(r, c);
  const auto f = random_vector(4, rng);
  CHECK(encode(tce, f, std::vector<double>(3, 0.0)) == encode(plain, f, {}));

  const Decoder d(p, f, std::vector<double>{0.2, 0.3, 0.5});
  CHECK(d.initial_state().h == encode(p, f, {}));
  for (double v : d.initial_state().c) CHECK(v == 0.0);
}

TEST_CASE("decoder inputs") {
  Rng rng(4);
  const auto w = random_vector(6, rng), z = random_vector(3, rng);
  CHECK(decoder_input(Variant::kTead, w, z, std::vector<double>(6, 0.0)) == w);
  CHECK(decoder_input(Variant::kTemd, w, z, std::vector<double>(6, 1.0)) == w);
  CHECK(decoder_input(Variant::kVanilla, w, z, {}) == w);
  CHECK(decoder_input(Variant::kTgm, w, z, {}) == w);
  const auto e = random_vector(6, rng);
  const auto add = decoder_input(Variant::kTead, w, z, e);
  const auto mul = decoder_input(Variant::kTemd, w, z, e);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(add[i] == w[i] + e[i]);
    CHECK(mul[i] == w[i] * e[i]);
  }
}

TEST_CASE("step probabilities") {
  Rng rng(6);
  auto p = init_caption_model(small_config(Variant::kVanilla), rng);
  const DecoderState zero{std::vector<double>(6, 0.0), std::vector<double>(6, 0.0)};
  p.out_b.fill(0.0);
  for (double v : step_probabilities(zero, p)) CHECK(v == doctest::Approx(1.0 / 12.0).epsilon(1e-15));

  const DecoderState s{random_vector(6, rng), random_vector(6, rng)};
  for (double& v : p.out_b.values()) v = rng.normal();
  const auto probs = step_probabilities(s, p);
  CHECK(on_simplex(probs, 1e-12));
  for (double& v : p.out_b.values()) v += 3.7;
  CHECK(argmax(step_probabilities(s, p)) == argmax(probs));
  CHECK(&p.output_weights() == &p.embed);
}

TEST_CASE("tgm with a one-hot topic decodes like a standalone lstm") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = init_caption_model(small_config(Variant::kTgm), rng);
    const auto f = random_vector(4, rng);
    std::vector<std::size_t> path;
    for (int t = 0; t < 8; ++t) path.push_back(3 + rng.below(9));
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> z(3, 0.0);
      z[k] = 1.0;
      const auto standalone = oracle::standalone_lstm(p, z);
      const auto a = trace(Decoder(p, f, z), path);
      const auto b = trace(Decoder(standalone, f, {}), path);
      for (std::size_t t = 0; t < path.size(); ++t) CHECK(max_abs_diff(a[t], b[t]) < 1e-9);
    }
  }
}

TEST_CASE("tead and temd reduce to vanilla") {
  Rng rng(8);
  for (Variant v : {Variant::kTead, Variant::kTemd}) {
    auto p = init_caption_model(small_config(v), rng);
    p.topic_w.fill(0.0);
    p.topic_b.fill(v == Variant::kTead ? 0.0 : 1.0);
    auto vanilla = p;
    vanilla.config.variant = Variant::kVanilla;
    vanilla.topic_w = Tensor();
    vanilla.topic_b = Tensor();
    const auto f = random_vector(4, rng), z = topics_for(v, rng);
    std::vector<std::size_t> path;
    for (int t = 0; t < 10; ++t) path.push_back(rng.below(12));
    const auto a = trace(Decoder(p, f, z), path);
    const auto b = trace(Decoder(vanilla, f, {}), path);
    for (std::size_t t = 0; t < path.size(); ++t) CHECK(max_abs_diff(a[t], b[t]) <= 1e-12);
  }
}

TEST_CASE("caption targets") {
  Vocabulary v = Vocabulary::from_tokens({"<bos>", "<eos>", "<unk>", "a", "b"});
  CHECK(caption_targets({"a", "c", "b"}, v, 30) == std::vector<std::size_t>{3, 2, 4, 1});
  // the length limit counts the end token
  CHECK(caption_targets({"a", "a", "a", "a"}, v, 2) == std::vector<std::size_t>{3, 1});
  CHECK(caption_targets(std::vector<std::string>(40, "b"), v, 30).size() == 30);
}

TEST_CASE("uniform model loss and perplexity") {
  for (Variant v : kAllVariants) {
    Rng rng(9);
    auto p = init_caption_model(small_config(v), rng);
    p.embed.fill(0.0);
    p.out_b.fill(0.0);
    const std::vector<std::size_t> targets = {3, 4, 5, 1};
    const auto f = random_vector(4, rng), z = topics_for(v, rng);
    CHECK(sequence_loss(p, f, z, targets) == doctest::Approx(4.0 * std::log(12.0)).epsilon(1e-13));

    CaptionDataset data;
    data.features = {f};
    data.topics = {z};
    data.pairs = {{0, targets}, {0, {6, 1}}};
    CHECK(perplexity(p, data) == doctest::Approx(12.0).epsilon(1e-13));
  }
  Rng rng(1);
  const auto p = init_caption_model(small_config(Variant::kVanilla), rng);
  CHECK_THROWS_AS(sequence_loss(p, std::vector<double>(4, 0.0), {}, {}), Error);
  CHECK_THROWS_AS(perplexity(p, CaptionDataset{}), Error);
}

TEST_CASE("loss is non-negative and perplexity at least one") {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const Variant v = kAllVariants[trial % 6];
    const auto p = init_caption_model(small_config(v), rng);
    const auto f = random_vector(4, rng), z = topics_for(v, rng);
    std::vector<std::size_t> targets;
    for (std::size_t t = 0, n = 1 + rng.below(6); t < n; ++t) targets.push_back(3 + rng.below(9));
    targets.push_back(Vocabulary::kEos);
    CHECK(sequence_loss(p, f, z, targets) >= 0.0);
    CaptionDataset data{{f}, {z}, {{0, targets}}};
    CHECK(perplexity(p, data) >= 1.0);

    const auto dists = teacher_forced_distributions(p, f, z, targets);
    double nll = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      CHECK(on_simplex(dists[t], 1e-12));
      nll -= std::log(dists[t][targets[t]]);
    }
    CHECK(nll == doctest::Approx(sequence_loss(p, f, z, targets)).epsilon(1e-12));
  }
}

TEST_CASE("gradient suite") {
  const auto entries = gradient_suite(1);
  CHECK(entries.size() == 8);
  for (const auto& e : entries) {
    INFO(e.name);
    CHECK(e.coordinates > 0);
    CHECK(e.max_relative_error < 1e-4);
  }
}

TEST_CASE("dropout changes the training loss only when active") {
  Rng rng(11);
  auto cfg = small_config(Variant::kTgm);
  cfg.dropout = 0.5;
  const auto p = init_caption_model(cfg, rng);
  const auto f = random_vector(4, rng), z = topics_for(Variant::kTgm, rng);
  const std::vector<std::size_t> targets = {3, 4, 1};
  Rng d1(1), d2(1);
  const double a = sequence_loss(p, f, z, targets, &d1);
  CHECK(a == sequence_loss(p, f, z, targets, &d2));
  CHECK(a != sequence_loss(p, f, z, targets));
}

TEST_CASE("training reduces loss and is deterministic") {
  for (Variant v : kAllVariants) {
    Rng rng(12);
    auto cfg = small_config(v);
    cfg.hidden = 16;
    cfg.factors = 8;
    cfg.init_scale = 0.08;
    const auto p = init_caption_model(cfg, rng);
    CaptionDataset data;
    for (int i = 0; i < 4; ++i) {
      data.features.push_back(random_vector(4, rng));
      data.topics.push_back(topics_for(v, rng));
      data.pairs.push_back({static_cast<std::size_t>(i), {3u + i, 5u + i, 1}});
    }
    CaptionerTrainOptions o;
    o.epochs = 30;
    o.batch_size = 2;
    o.adam.learning_rate = 1e-2;
    const auto a = train_captioner(p, data, o);
    const auto b = train_captioner(p, data, o);
    INFO(variant_name(v));
    CHECK(a.epoch_losses.back() < a.epoch_losses.front());
    CHECK(flatten(a.params) == flatten(b.params));
    CHECK(&a.params.output_weights() == &a.params.embed);
  }
}

TEST_CASE("beam width one is greedy decoding") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Variant v = kAllVariants[trial % 6];
    const auto p = init_caption_model(small_config(v), rng);
    const auto f = random_vector(4, rng), z = topics_for(v, rng);
    const Decoder d(p, f, z);
    const auto beam = beam_search(d, 1);
    const auto greedy = greedy_decode(d);
    CHECK(beam.tokens == greedy.tokens);
    CHECK(beam.log_prob == greedy.log_prob);
  }
}

TEST_CASE("beam hypotheses") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const Variant v = kAllVariants[trial % 6];
    const auto p = init_caption_model(small_config(v), rng);
    const auto f = random_vector(4, rng), z = topics_for(v, rng);
    const Decoder d(p, f, z);
    const auto one = beam_search(d, 1), five = beam_search(d, 5);
    for (const auto* h : {&one, &five}) {
      CHECK(h->finished);
      CHECK(h->tokens.size() <= 30);
      CHECK((h->tokens.back() == Vocabulary::kEos || h->tokens.size() == 30));
      CHECK(h->log_prob == doctest::Approx(path_log_prob(d, h->tokens)).epsilon(1e-12));
    }
    CHECK(beam_search(d, 5).tokens == five.tokens);
  }
}

TEST_CASE("beam log-prob is non-decreasing in width") {
  Rng rng(14);
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Variant v = kAllVariants[trial % 6];
    const auto p = init_caption_model(small_config(v), rng);
    const auto f = random_vector(4, rng), z = topics_for(v, rng);
    const Decoder d(p, f, z);
    violations += beam_search(d, 5).log_prob < beam_search(d, 1).log_prob;
  }
  CHECK(violations == 0);
}

TEST_CASE("beam search never beats the exhaustive optimum") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = small_config(Variant::kTgm, 5);
    cfg.init_scale = 1.0;
    const auto p = init_caption_model(cfg, rng);
    const auto f = random_vector(4, rng), z = topics_for(Variant::kTgm, rng);
    const Decoder d(p, f, z);
    const double best = oracle::best_sequence_log_prob(d, 4);
    const auto wide = beam_search(d, 200, 4);
    CHECK(wide.log_prob == doctest::Approx(best).epsilon(1e-12));
    CHECK(beam_search(d, 2, 4).log_prob <= best + 1e-12);
  }
}

TEST_CASE("a memorized caption is returned for every beam width") {
  Rng rng(16);
  auto cfg = small_config(Variant::kVanilla);
  cfg.hidden = 16;
  cfg.init_scale = 0.08;
  const auto p = init_caption_model(cfg, rng);
  CaptionDataset data;
  data.features = {random_vector(4, rng)};
  data.topics = {{}};
  data.pairs = {{0, {4, 7, 9, 5, 1}}};
  CaptionerTrainOptions o;
  o.epochs = 300;
  o.batch_size = 1;
  o.adam.learning_rate = 1e-2;
  const auto trained = train_captioner(p, data, o).params;
  CHECK(perplexity(trained, data) < 1.05);
  for (std::size_t b = 1; b <= 5; ++b)
    CHECK(beam_search(trained, data.features[0], {}, b).tokens == std::vector<std::size_t>{4, 7, 9, 5, 1});
}
