// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace tgc {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kVanilla: return "vanilla";
    case Variant::kTce: return "tce";
    case Variant::kTcd: return "tcd";
    case Variant::kTead: return "tead";
    case Variant::kTemd: return "temd";
    case Variant::kTgm: return "tgm";
  }
  return "vanilla";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == name) return v;
  fail(ErrorCode::kInvalidArgument,
       "unknown variant '" + std::string(name) + "' (expected vanilla|tce|tcd|tead|temd|tgm)");
}

std::size_t CaptionerConfig::encoder_input_dim() const {
  return feature_dim + (variant == Variant::kTce ? num_topics : 0);
}

std::size_t CaptionerConfig::step_input_dim() const {
  return hidden + (variant == Variant::kTcd ? num_topics : 0);
}

void CaptionerConfig::validate() const {
  require(feature_dim > 0, "captioner: feature dimension must be positive");
  require(num_topics > 0, "captioner: topic count must be positive");
  require(vocab_size > 3, "captioner: vocabulary holds only reserved tokens");
  require(hidden > 0, "captioner: hidden size must be positive");
  require(variant != Variant::kTgm || factors > 0, "captioner: TGM needs at least one factor");
  require(max_length >= 1, "captioner: max length must be at least 1");
  require(dropout >= 0.0 && dropout < 1.0, "captioner: dropout must lie in [0, 1)");
}

// ----------------------------------------------------------------------------
// Parameters
// ----------------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 4> kGateNames = {"i", "f", "o", "g"};

template <class Self, class Out>
void collect_tensors(Self& self, Out& out) {
  out.emplace_back("enc_w", &self.enc_w);
  out.emplace_back("enc_b", &self.enc_b);
  out.emplace_back("embed", &self.embed);
  out.emplace_back("out_b", &self.out_b);
  if (self.config.variant != Variant::kTgm) {
    out.emplace_back("lstm_wx", &self.lstm_wx);
    out.emplace_back("lstm_wh", &self.lstm_wh);
  }
  out.emplace_back("lstm_b", &self.lstm_b);
  if (self.config.variant == Variant::kTead || self.config.variant == Variant::kTemd) {
    out.emplace_back("topic_w", &self.topic_w);
    out.emplace_back("topic_b", &self.topic_b);
  }
  if (self.config.variant == Variant::kTgm) {
    for (std::size_t g = 0; g < 4; ++g) {
      const std::string gx = std::string("tgm_x.") + kGateNames[g];
      const std::string gh = std::string("tgm_h.") + kGateNames[g];
      out.emplace_back(gx + ".a", &self.tgm_x[g].a);
      out.emplace_back(gx + ".b", &self.tgm_x[g].b);
      out.emplace_back(gx + ".c", &self.tgm_x[g].c);
      out.emplace_back(gh + ".a", &self.tgm_h[g].a);
      out.emplace_back(gh + ".b", &self.tgm_h[g].b);
      out.emplace_back(gh + ".c", &self.tgm_h[g].c);
    }
  }
}

void fill_uniform(Tensor& t, double scale, Rng& rng) {
  for (double& x : t.values()) x = rng.uniform(-scale, scale);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> CaptionModelParams::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_tensors(*this, out);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> CaptionModelParams::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  collect_tensors(*this, out);
  return out;
}

CaptionModelParams CaptionModelParams::zeros_like() const {
  CaptionModelParams z = *this;
  for (auto& [name, t] : z.named_tensors()) t->fill(0.0);
  return z;
}

std::size_t CaptionModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t->size();
  return n;
}

CaptionModelParams init_caption_model(const CaptionerConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t H = cfg.hidden, K = cfg.num_topics, V = cfg.vocab_size;
  const std::size_t in = cfg.step_input_dim();
  const double s = cfg.init_scale;
  CaptionModelParams p;
  p.config = cfg;
  p.enc_w = Tensor::matrix(H, cfg.encoder_input_dim());
  p.enc_b = Tensor::vector(H);
  p.embed = Tensor::matrix(V, H);
  p.out_b = Tensor::vector(V);
  p.lstm_b = Tensor::vector(4 * H);
  fill_uniform(p.enc_w, s, rng);
  fill_uniform(p.embed, s, rng);
  for (std::size_t i = 0; i < H; ++i) p.lstm_b[kForgetGate * H + i] = cfg.forget_bias;

  if (cfg.variant != Variant::kTgm) {
    p.lstm_wx = Tensor::matrix(4 * H, in);
    p.lstm_wh = Tensor::matrix(4 * H, H);
    fill_uniform(p.lstm_wx, s, rng);
    fill_uniform(p.lstm_wh, s, rng);
  }
  if (cfg.variant == Variant::kTead || cfg.variant == Variant::kTemd) {
    p.topic_w = Tensor::matrix(H, K);
    p.topic_b = Tensor::vector(H);
    fill_uniform(p.topic_w, s, rng);
    // TEMD multiplies the word embedding by the topic embedding; start that
    // product near the identity.
    if (cfg.variant == Variant::kTemd) p.topic_b.fill(1.0);
  }
  if (cfg.variant == Variant::kTgm) {
    const std::size_t F = cfg.factors;
    auto make = [&](std::size_t cols) {
      FactorTriple t{Tensor::matrix(H, F), Tensor::matrix(F, K), Tensor::matrix(F, cols)};
      fill_uniform(t.a, s, rng);
      for (double& x : t.b.values()) x = 1.0 + rng.uniform(-s, s);
      fill_uniform(t.c, s, rng);
      return t;
    };
    for (std::size_t g = 0; g < 4; ++g) {
      p.tgm_x[g] = make(in);
      p.tgm_h[g] = make(H);
    }
  }
  return p;
}

// ----------------------------------------------------------------------------
// Forward pieces
// ----------------------------------------------------------------------------

std::vector<double> encode(const CaptionModelParams& p, std::span<const double> features,
                           std::span<const double> topics) {
  const auto& cfg = p.config;
  require(features.size() == cfg.feature_dim,
          "encode: expected " + std::to_string(cfg.feature_dim) + " feature values, got " +
              std::to_string(features.size()));
  std::vector<double> input(features.begin(), features.end());
  if (cfg.variant == Variant::kTce) {
    require(topics.size() == cfg.num_topics, "encode: topic vector has the wrong length");
    input.insert(input.end(), topics.begin(), topics.end());
  }
  std::vector<double> x(p.enc_b.values().begin(), p.enc_b.values().end());
  matvec_add(p.enc_w, input, x);
  return x;
}

namespace {

struct GateValues {
  std::vector<double> i, f, o, g, c, tanh_c, h;
};

GateValues lstm_forward(std::span<const double> h_prev, std::span<const double> c_prev,
                        std::span<const double> input, const Tensor& wx, const Tensor& wh,
                        const Tensor& bias) {
  const std::size_t H = h_prev.size();
  require(c_prev.size() == H && wx.rows() == 4 * H && wh.rows() == 4 * H && wh.cols() == H &&
              bias.size() == 4 * H && wx.cols() == input.size(),
          "lstm_step: inconsistent shapes");
  std::vector<double> a(bias.values().begin(), bias.values().end());
  matvec_add(wx, input, a);
  matvec_add(wh, h_prev, a);
  GateValues v;
  v.i.resize(H);
  v.f.resize(H);
  v.o.resize(H);
  v.g.resize(H);
  v.c.resize(H);
  v.tanh_c.resize(H);
  v.h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    v.i[j] = sigmoid(a[kInputGate * H + j]);
    v.f[j] = sigmoid(a[kForgetGate * H + j]);
    v.o[j] = sigmoid(a[kOutputGate * H + j]);
    v.g[j] = std::tanh(a[kCellGate * H + j]);
    v.c[j] = v.f[j] * c_prev[j] + v.i[j] * v.g[j];
    v.tanh_c[j] = std::tanh(v.c[j]);
    v.h[j] = v.o[j] * v.tanh_c[j];
    if (!std::isfinite(v.h[j]) || !std::isfinite(v.c[j]))
      fail(ErrorCode::kNumeric, "LSTM state became non-finite");
  }
  return v;
}

void compose_into(std::span<const double> z, const FactorTriple& t, Tensor& dst,
                  std::size_t row_offset) {
  const std::size_t H = t.a.rows(), F = t.a.cols(), C = t.c.cols();
  std::vector<double> s(F, 0.0);
  matvec_add(t.b, z, s);
  std::vector<double> scaled(F);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t f = 0; f < F; ++f) scaled[f] = t.a(i, f) * s[f];
    auto row = dst.row(row_offset + i);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t f = 0; f < F; ++f) {
      if (scaled[f] == 0.0) continue;
      const auto crow = t.c.row(f);
      for (std::size_t j = 0; j < C; ++j) row[j] += scaled[f] * crow[j];
    }
  }
}

}  // namespace

DecoderState lstm_step(const DecoderState& state, std::span<const double> input, const Tensor& wx,
                       const Tensor& wh, const Tensor& bias) {
  auto v = lstm_forward(state.h, state.c, input, wx, wh, bias);
  return {std::move(v.h), std::move(v.c)};
}

std::vector<double> decoder_input(Variant variant, std::span<const double> word,
                                  std::span<const double> topics,
                                  std::span<const double> topic_embedding) {
  std::vector<double> out(word.begin(), word.end());
  switch (variant) {
    case Variant::kVanilla:
    case Variant::kTce:
    case Variant::kTgm:
      break;
    case Variant::kTcd:
      out.insert(out.end(), topics.begin(), topics.end());
      break;
    case Variant::kTead:
      require(topic_embedding.size() == word.size(), "decoder_input: topic embedding size");
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += topic_embedding[j];
      break;
    case Variant::kTemd:
      require(topic_embedding.size() == word.size(), "decoder_input: topic embedding size");
      for (std::size_t j = 0; j < out.size(); ++j) out[j] *= topic_embedding[j];
      break;
  }
  return out;
}

Tensor tgm_compose(std::span<const double> topics, const Tensor& a, const Tensor& b,
                   const Tensor& c) {
  require(a.rank() == 2 && b.rank() == 2 && c.rank() == 2, "tgm_compose: factors must be matrices");
  require(a.cols() == b.rows() && b.rows() == c.rows() && b.cols() == topics.size(),
          "tgm_compose: factor shapes do not agree");
  Tensor out = Tensor::matrix(a.rows(), c.cols());
  compose_into(topics, FactorTriple{a, b, c}, out, 0);
  return out;
}

std::vector<double> step_probabilities(const DecoderState& state, const CaptionModelParams& p) {
  std::vector<double> logits(p.out_b.values().begin(), p.out_b.values().end());
  matvec_add(p.output_weights(), state.h, logits);
  return softmax(logits);
}

// ----------------------------------------------------------------------------
// Decoder
// ----------------------------------------------------------------------------

Decoder::Decoder(const CaptionModelParams& params, std::span<const double> features,
                 std::span<const double> topics)
    : params_(&params), topics_(topics.begin(), topics.end()) {
  const auto& cfg = params.config;
  if (cfg.variant != Variant::kVanilla)
    require(topics.size() == cfg.num_topics,
            "decoder: expected " + std::to_string(cfg.num_topics) + " topic values, got " +
                std::to_string(topics.size()));
  encoder_input_.assign(features.begin(), features.end());
  if (cfg.variant == Variant::kTce) encoder_input_.insert(encoder_input_.end(), topics.begin(), topics.end());
  initial_.h = encode(params, features, topics);
  initial_.c.assign(cfg.hidden, 0.0);
  if (cfg.variant == Variant::kTead || cfg.variant == Variant::kTemd) {
    topic_embedding_.assign(params.topic_b.values().begin(), params.topic_b.values().end());
    matvec_add(params.topic_w, topics, topic_embedding_);
  }
  if (cfg.variant == Variant::kTgm) {
    const std::size_t H = cfg.hidden;
    composed_wx_ = Tensor::matrix(4 * H, cfg.step_input_dim());
    composed_wh_ = Tensor::matrix(4 * H, H);
    for (std::size_t g = 0; g < 4; ++g) {
      compose_into(topics_, params.tgm_x[g], composed_wx_, g * H);
      compose_into(topics_, params.tgm_h[g], composed_wh_, g * H);
    }
  }
}

const Tensor& Decoder::input_weights() const {
  return params_->config.variant == Variant::kTgm ? composed_wx_ : params_->lstm_wx;
}

const Tensor& Decoder::recurrent_weights() const {
  return params_->config.variant == Variant::kTgm ? composed_wh_ : params_->lstm_wh;
}

std::vector<double> Decoder::step_input(std::size_t prev_token) const {
  require(prev_token < params_->config.vocab_size, "decoder: token id out of range");
  return decoder_input(params_->config.variant, params_->embed.row(prev_token), topics_,
                       topic_embedding_);
}

DecoderState Decoder::advance(const DecoderState& state, std::size_t prev_token) const {
  return lstm_step(state, step_input(prev_token), input_weights(), recurrent_weights(),
                   params_->lstm_b);
}

std::vector<double> Decoder::log_probs(const DecoderState& state) const {
  std::vector<double> logits(params_->out_b.values().begin(), params_->out_b.values().end());
  matvec_add(params_->output_weights(), state.h, logits);
  return log_softmax(logits);
}

// ----------------------------------------------------------------------------
// Teacher-forced loss and its gradient
// ----------------------------------------------------------------------------

std::vector<std::size_t> caption_targets(const std::vector<std::string>& tokens,
                                         const Vocabulary& vocab, std::size_t max_length) {
  require(!tokens.empty(), "caption is empty");
  require(max_length >= 1, "max length must be at least 1");
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < tokens.size() && i + 1 < max_length; ++i)
    ids.push_back(vocab.index(tokens[i]));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

namespace {

struct StepCache {
  std::size_t prev_token = 0;
  std::vector<double> input;   // after dropout
  std::vector<double> in_mask; // empty without dropout
  std::vector<double> h_prev, c_prev;
  GateValues gates;
  std::vector<double> h_out;    // after dropout
  std::vector<double> out_mask; // empty without dropout
  std::vector<double> probs;
};

std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng) {
  std::vector<double> m(n);
  const double keep = 1.0 / (1.0 - rate);
  for (double& x : m) x = rng.uniform() < rate ? 0.0 : keep;
  return m;
}

struct EffectiveGrads {
  Tensor wx;
  Tensor wh;
};

double run_sequence(const Decoder& dec, const std::vector<std::size_t>& targets, Rng* rng,
                    CaptionModelParams* grads, double scale, EffectiveGrads* eff,
                    std::vector<std::vector<double>>* distributions = nullptr) {
  const CaptionModelParams& p = dec.params();
  const auto& cfg = p.config;
  require(!targets.empty(), "sequence_loss: empty caption");
  const bool drop = rng != nullptr && cfg.dropout > 0.0;
  const std::size_t H = cfg.hidden;

  std::vector<StepCache> steps(targets.size());
  std::vector<double> h = dec.initial_state().h;
  std::vector<double> c = dec.initial_state().c;
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    StepCache& s = steps[t];
    require(targets[t] < cfg.vocab_size, "sequence_loss: token id out of range");
    s.prev_token = t == 0 ? Vocabulary::kBos : targets[t - 1];
    s.input = dec.step_input(s.prev_token);
    if (drop) {
      s.in_mask = dropout_mask(s.input.size(), cfg.dropout, *rng);
      for (std::size_t j = 0; j < s.input.size(); ++j) s.input[j] *= s.in_mask[j];
    }
    s.h_prev = h;
    s.c_prev = c;
    s.gates = lstm_forward(h, c, s.input, dec.input_weights(), dec.recurrent_weights(), p.lstm_b);
    h = s.gates.h;
    c = s.gates.c;
    s.h_out = h;
    if (drop) {
      s.out_mask = dropout_mask(H, cfg.dropout, *rng);
      for (std::size_t j = 0; j < H; ++j) s.h_out[j] *= s.out_mask[j];
    }
    std::vector<double> logits(p.out_b.values().begin(), p.out_b.values().end());
    matvec_add(p.output_weights(), s.h_out, logits);
    const auto logp = log_softmax(logits);
    loss -= logp[targets[t]];
    if (grads || distributions) {
      s.probs.resize(logp.size());
      for (std::size_t k = 0; k < logp.size(); ++k) s.probs[k] = std::exp(logp[k]);
    }
    if (distributions) distributions->push_back(s.probs);
  }
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "sequence loss is not finite");
  if (!grads) return loss;

  const Variant variant = cfg.variant;
  Tensor& dwx = eff ? eff->wx : grads->lstm_wx;
  Tensor& dwh = eff ? eff->wh : grads->lstm_wh;
  const Tensor& wx = dec.input_weights();
  const Tensor& wh = dec.recurrent_weights();
  const auto& ze = dec.topic_embedding();

  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dze(ze.size(), 0.0);
  std::vector<double> dlogits(cfg.vocab_size), dh(H), dc(H), da(4 * H);
  std::vector<double> dinput(cfg.step_input_dim());
  for (std::size_t t = targets.size(); t-- > 0;) {
    const StepCache& s = steps[t];
    const GateValues& g = s.gates;
    for (std::size_t k = 0; k < dlogits.size(); ++k) dlogits[k] = scale * s.probs[k];
    dlogits[targets[t]] -= scale;
    outer_add(grads->embed, dlogits, s.h_out);
    axpy(1.0, dlogits, grads->out_b.values());

    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_t_add(p.output_weights(), dlogits, dh);
    for (std::size_t j = 0; j < H; ++j) {
      if (!s.out_mask.empty()) dh[j] *= s.out_mask[j];
      dh[j] += dh_next[j];
      dc[j] = dc_next[j] + dh[j] * g.o[j] * (1.0 - g.tanh_c[j] * g.tanh_c[j]);
      const double d_o = dh[j] * g.tanh_c[j];
      const double d_i = dc[j] * g.g[j];
      const double d_g = dc[j] * g.i[j];
      const double d_f = dc[j] * s.c_prev[j];
      da[kInputGate * H + j] = d_i * g.i[j] * (1.0 - g.i[j]);
      da[kForgetGate * H + j] = d_f * g.f[j] * (1.0 - g.f[j]);
      da[kOutputGate * H + j] = d_o * g.o[j] * (1.0 - g.o[j]);
      da[kCellGate * H + j] = d_g * (1.0 - g.g[j] * g.g[j]);
      dc_next[j] = dc[j] * g.f[j];
    }
    outer_add(dwx, da, s.input);
    outer_add(dwh, da, s.h_prev);
    axpy(1.0, da, grads->lstm_b.values());

    std::fill(dinput.begin(), dinput.end(), 0.0);
    matvec_t_add(wx, da, dinput);
    if (!s.in_mask.empty())
      for (std::size_t j = 0; j < dinput.size(); ++j) dinput[j] *= s.in_mask[j];
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    matvec_t_add(wh, da, dh_next);

    auto erow = grads->embed.row(s.prev_token);
    const auto word = p.embed.row(s.prev_token);
    switch (variant) {
      case Variant::kVanilla:
      case Variant::kTce:
      case Variant::kTgm:
      case Variant::kTcd:
        for (std::size_t j = 0; j < H; ++j) erow[j] += dinput[j];
        break;
      case Variant::kTead:
        for (std::size_t j = 0; j < H; ++j) {
          erow[j] += dinput[j];
          dze[j] += dinput[j];
        }
        break;
      case Variant::kTemd:
        for (std::size_t j = 0; j < H; ++j) {
          erow[j] += dinput[j] * ze[j];
          dze[j] += dinput[j] * word[j];
        }
        break;
    }
  }
  // h_0 = x; c_0 is constant.
  outer_add(grads->enc_w, dh_next, dec.encoder_input());
  axpy(1.0, dh_next, grads->enc_b.values());
  if (variant == Variant::kTead || variant == Variant::kTemd) {
    outer_add(grads->topic_w, dze, dec.topics());
    axpy(1.0, dze, grads->topic_b.values());
  }
  return loss;
}

// Chain rule through W = a diag(b z) c for one gate block of the effective
// gradient.
void backprop_factor(const FactorTriple& t, std::span<const double> z, const Tensor& deff,
                     std::size_t row_offset, FactorTriple& g) {
  const std::size_t H = t.a.rows(), F = t.a.cols(), C = t.c.cols();
  std::vector<double> s(F, 0.0);
  matvec_add(t.b, z, s);
  std::vector<double> ds(F, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    const auto grow = deff.row(row_offset + i);
    bool any = false;
    for (double v : grow)
      if (v != 0.0) {
        any = true;
        break;
      }
    if (!any) continue;
    for (std::size_t f = 0; f < F; ++f) {
      const auto crow = t.c.row(f);
      double m = 0.0;  // (G c^T)_{if}
      for (std::size_t j = 0; j < C; ++j) m += grow[j] * crow[j];
      g.a(i, f) += m * s[f];
      ds[f] += t.a(i, f) * m;
      const double as = t.a(i, f) * s[f];
      if (as == 0.0) continue;
      auto gcrow = g.c.row(f);
      for (std::size_t j = 0; j < C; ++j) gcrow[j] += as * grow[j];
    }
  }
  outer_add(g.b, ds, z);
}

void finish_tgm(const CaptionModelParams& p, std::span<const double> z, const EffectiveGrads& eff,
                CaptionModelParams& grads) {
  const std::size_t H = p.config.hidden;
  for (std::size_t g = 0; g < 4; ++g) {
    backprop_factor(p.tgm_x[g], z, eff.wx, g * H, grads.tgm_x[g]);
    backprop_factor(p.tgm_h[g], z, eff.wh, g * H, grads.tgm_h[g]);
  }
}

EffectiveGrads make_effective(const CaptionerConfig& cfg) {
  return {Tensor::matrix(4 * cfg.hidden, cfg.step_input_dim()),
          Tensor::matrix(4 * cfg.hidden, cfg.hidden)};
}

}  // namespace

double sequence_loss(const CaptionModelParams& params, std::span<const double> features,
                     std::span<const double> topics, const std::vector<std::size_t>& targets,
                     Rng* dropout_rng, CaptionModelParams* grads, double scale) {
  Decoder dec(params, features, topics);
  if (grads && params.config.variant == Variant::kTgm) {
    EffectiveGrads eff = make_effective(params.config);
    const double loss = run_sequence(dec, targets, dropout_rng, grads, scale, &eff);
    finish_tgm(params, dec.topics(), eff, *grads);
    return loss;
  }
  return run_sequence(dec, targets, dropout_rng, grads, scale, nullptr);
}

std::vector<std::vector<double>> teacher_forced_distributions(
    const CaptionModelParams& params, std::span<const double> features,
    std::span<const double> topics, const std::vector<std::size_t>& targets) {
  Decoder dec(params, features, topics);
  std::vector<std::vector<double>> out;
  run_sequence(dec, targets, nullptr, nullptr, 1.0, nullptr, &out);
  return out;
}

// ----------------------------------------------------------------------------
// Training
// ----------------------------------------------------------------------------

CaptionDataset build_caption_dataset(const std::vector<const VideoRecord*>& records,
                                     const FeatureManifest& manifest,
                                     const std::vector<std::vector<double>>& topics,
                                     const Vocabulary& vocab, std::size_t max_length) {
  require(records.size() == topics.size(), "caption dataset: one topic vector per video");
  CaptionDataset d;
  for (std::size_t v = 0; v < records.size(); ++v) {
    const VideoRecord& r = *records[v];
    std::vector<double> feats;
    feats.reserve(manifest.total_dim());
    for (const auto& [name, dim] : manifest.entries()) {
      const auto it = r.features.find(name);
      if (it == r.features.end()) {
        feats.insert(feats.end(), dim, 0.0);
      } else {
        require(it->second.size() == dim, "video '" + r.video_id + "': modality '" + name +
                                              "' has the wrong dimension");
        feats.insert(feats.end(), it->second.begin(), it->second.end());
      }
    }
    d.features.push_back(std::move(feats));
    d.topics.push_back(topics[v]);
    for (const auto& cap : r.captions) {
      const auto tokens = tokenize(cap);
      if (tokens.empty()) continue;
      d.pairs.push_back({v, caption_targets(tokens, vocab, max_length)});
    }
  }
  return d;
}

CaptionerTrainResult train_captioner(CaptionModelParams params, const CaptionDataset& data,
                                     const CaptionerTrainOptions& o) {
  require(!data.pairs.empty(), "train_captioner: no caption pairs");
  require(o.batch_size > 0, "train_captioner: batch size must be positive");
  Rng rng(o.seed);
  const bool tgm = params.config.variant == Variant::kTgm;

  auto named = params.named_tensors();
  std::vector<AdamState> adam;
  for (auto& [name, t] : named) adam.emplace_back(*t, o.adam);

  CaptionerTrainResult result;
  std::vector<std::size_t> order(data.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += o.batch_size) {
      const std::size_t end = std::min(order.size(), start + o.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      CaptionModelParams grads = params.zeros_like();

      // Group by video so TGM composes and back-propagates its factors once
      // per video instead of once per caption.
      std::vector<std::size_t> videos;
      std::map<std::size_t, std::vector<std::size_t>> by_video;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t v = data.pairs[order[b]].video;
        auto& bucket = by_video[v];
        if (bucket.empty()) videos.push_back(v);
        bucket.push_back(order[b]);
      }
      for (std::size_t v : videos) {
        Decoder dec(params, data.features[v], data.topics[v]);
        std::optional<EffectiveGrads> eff;
        if (tgm) eff = make_effective(params.config);
        for (std::size_t idx : by_video[v])
          total += run_sequence(dec, data.pairs[idx].targets, &rng, &grads, scale,
                                eff ? &*eff : nullptr);
        if (tgm) finish_tgm(params, dec.topics(), *eff, grads);
      }

      auto gnamed = grads.named_tensors();
      std::vector<Tensor*> gptr;
      for (auto& [name, t] : gnamed) gptr.push_back(t);
      clip_global_norm(gptr, o.clip_norm);
      for (std::size_t i = 0; i < named.size(); ++i) adam_step(*named[i].second, *gptr[i], adam[i]);
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean))
      fail(ErrorCode::kNumeric, "captioner training diverged at epoch " + std::to_string(epoch));
    result.epoch_losses.push_back(mean);
  }
  result.params = std::move(params);
  return result;
}

// ----------------------------------------------------------------------------
// Decoding
// ----------------------------------------------------------------------------

BeamHypothesis greedy_decode(const Decoder& dec, std::size_t max_length) {
  require(max_length >= 1, "greedy_decode: max length must be at least 1");
  BeamHypothesis hyp;
  hyp.state = dec.advance(dec.initial_state(), Vocabulary::kBos);
  for (;;) {
    const auto lp = dec.log_probs(hyp.state);
    const std::size_t w = argmax(lp);
    hyp.tokens.push_back(w);
    hyp.log_prob += lp[w];
    if (w == Vocabulary::kEos || hyp.tokens.size() >= max_length) break;
    hyp.state = dec.advance(hyp.state, w);
  }
  hyp.finished = true;
  return hyp;
}

namespace {

// Higher score first; equal scores resolve to the lexicographically smaller
// token sequence.
bool better(double sa, const std::vector<std::size_t>& ta, double sb,
            const std::vector<std::size_t>& tb) {
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
}

}  // namespace

BeamHypothesis beam_search(const Decoder& dec, std::size_t beam_width, std::size_t max_length) {
  require(beam_width >= 1, "beam_search: beam width must be at least 1");
  require(max_length >= 1, "beam_search: max length must be at least 1");
  const std::size_t V = dec.params().config.vocab_size;

  std::vector<BeamHypothesis> live(1);
  live[0].state = dec.advance(dec.initial_state(), Vocabulary::kBos);
  std::vector<BeamHypothesis> finished;

  struct Candidate {
    std::size_t parent;
    std::vector<std::size_t> tokens;
    double score;
  };

  while (!live.empty()) {
    std::vector<Candidate> cands;
    const std::size_t per_hyp = std::min(beam_width, V);
    std::vector<std::size_t> idx(V);
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto lp = dec.log_probs(live[h].state);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_hyp), idx.end(),
                        [&](std::size_t a, std::size_t b) {
                          return lp[a] != lp[b] ? lp[a] > lp[b] : a < b;
                        });
      for (std::size_t r = 0; r < per_hyp; ++r) {
        Candidate c{h, live[h].tokens, live[h].log_prob + lp[idx[r]]};
        c.tokens.push_back(idx[r]);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return better(a.score, a.tokens, b.score, b.tokens);
    });
    if (cands.size() > beam_width) cands.resize(beam_width);

    std::vector<BeamHypothesis> next;
    for (auto& c : cands) {
      BeamHypothesis hyp;
      hyp.log_prob = c.score;
      const std::size_t last = c.tokens.back();
      hyp.tokens = std::move(c.tokens);
      if (last == Vocabulary::kEos || hyp.tokens.size() >= max_length) {
        hyp.finished = true;
        hyp.state = live[c.parent].state;
        finished.push_back(std::move(hyp));
      } else {
        hyp.state = dec.advance(live[c.parent].state, last);
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);

    // Scores only decrease as hypotheses grow, so once the best finished
    // hypothesis beats every live one nothing can overtake it.
    if (!finished.empty() && !live.empty()) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_finished = std::max(best_finished, f.log_prob);
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& l : live) best_live = std::max(best_live, l.log_prob);
      if (best_finished > best_live) break;
    }
  }

  auto best = std::min_element(finished.begin(), finished.end(),
                               [](const BeamHypothesis& a, const BeamHypothesis& b) {
                                 return better(a.log_prob, a.tokens, b.log_prob, b.tokens);
                               });
  return *best;
}

BeamHypothesis beam_search(const CaptionModelParams& params, std::span<const double> features,
                           std::span<const double> topics, std::size_t beam_width,
                           std::size_t max_length) {
  Decoder dec(params, features, topics);
  return beam_search(dec, beam_width, max_length);
}

double perplexity(const CaptionModelParams& params, const CaptionDataset& data) {
  double nll = 0.0;
  std::size_t tokens = 0;
  std::map<std::size_t, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < data.pairs.size(); ++i) by_video[data.pairs[i].video].push_back(i);
  for (const auto& [v, idxs] : by_video) {
    Decoder dec(params, data.features[v], data.topics[v]);
    for (std::size_t i : idxs) {
      nll += run_sequence(dec, data.pairs[i].targets, nullptr, nullptr, 1.0, nullptr);
      tokens += data.pairs[i].targets.size();
    }
  }
  if (tokens == 0) fail(ErrorCode::kInvalidArgument, "perplexity: no tokens to score");
  return std::exp(nll / static_cast<double>(tokens));
}

}  // namespace tgc
