// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tgc/corpus.hpp"
#include "tgc/numerics.hpp"

namespace tgc {

/// Caption decoders. All share the multimodal encoder, the LSTM and the tied
/// output layer; they differ in where the topic vector enters.
enum class Variant {
  kVanilla,  // no topic
  kTce,      // topic appended to the encoder input
  kTcd,      // topic appended to every decoder input
  kTead,     // embedded topic added to every word embedding
  kTemd,     // embedded topic multiplied into every word embedding
  kTgm,      // LSTM matrices composed from the topic through a factorization
};

inline constexpr std::array<Variant, 6> kAllVariants = {
    Variant::kVanilla, Variant::kTce, Variant::kTcd, Variant::kTead, Variant::kTemd, Variant::kTgm};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct CaptionerConfig {
  Variant variant = Variant::kTgm;
  std::size_t feature_dim = 0;
  std::size_t num_topics = 20;
  std::size_t vocab_size = 0;
  std::size_t hidden = 512;  // LSTM state size, equal to the word embedding size
  std::size_t factors = 512; // TGM factor count
  std::size_t max_length = 30;
  double dropout = 0.5;
  double init_scale = 0.08;
  double forget_bias = 1.0;

  std::size_t encoder_input_dim() const;
  std::size_t step_input_dim() const;
  void validate() const;
};

/// Gate order inside every stacked LSTM matrix.
enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCellGate = 3 };

/// W(z) = a * diag(b z) * c for one LSTM matrix.
struct FactorTriple {
  Tensor a;  // hidden x factors
  Tensor b;  // factors x topics
  Tensor c;  // factors x input
};

struct CaptionModelParams {
  CaptionerConfig config;

  Tensor enc_w;  // hidden x encoder input
  Tensor enc_b;  // hidden
  Tensor embed;  // vocab x hidden; also the output projection (tied)
  Tensor out_b;  // vocab

  Tensor lstm_wx;  // 4 hidden x step input (all variants but TGM)
  Tensor lstm_wh;  // 4 hidden x hidden (all variants but TGM)
  Tensor lstm_b;   // 4 hidden

  Tensor topic_w;  // hidden x topics (TEAD/TEMD)
  Tensor topic_b;  // hidden (TEAD/TEMD)

  std::array<FactorTriple, 4> tgm_x;  // per gate, input maps (TGM)
  std::array<FactorTriple, 4> tgm_h;  // per gate, recurrent maps (TGM)

  /// Output weights of the softmax layer; the same storage as `embed`.
  const Tensor& output_weights() const { return embed; }

  /// The tensors that exist for this variant, with stable names.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  CaptionModelParams zeros_like() const;
  std::size_t parameter_count() const;
};

/// Weights uniform in [-init_scale, init_scale], biases zero except the
/// forget gate (forget_bias). TGM topic factors start near one so that
/// W(z) starts at the scale of an ordinary LSTM matrix.
CaptionModelParams init_caption_model(const CaptionerConfig& config, Rng& rng);

struct DecoderState {
  std::vector<double> h;
  std::vector<double> c;
};

/// x = W_e [features; topics (TCE)] + b_e
std::vector<double> encode(const CaptionModelParams& p, std::span<const double> features,
                           std::span<const double> topics);

/// i, f, o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c').
DecoderState lstm_step(const DecoderState& state, std::span<const double> input,
                       const Tensor& wx, const Tensor& wh, const Tensor& bias);

/// The per-step LSTM input for the variant. `topic_embedding` is W_z z + b_z
/// and is only read by TEAD/TEMD.
std::vector<double> decoder_input(Variant variant, std::span<const double> word,
                                  std::span<const double> topics,
                                  std::span<const double> topic_embedding);

/// a * diag(b z) * c
Tensor tgm_compose(std::span<const double> topics, const Tensor& a, const Tensor& b,
                   const Tensor& c);

/// softmax(E h + b_d)
std::vector<double> step_probabilities(const DecoderState& state, const CaptionModelParams& p);

/// Everything that is fixed for one video: initial state, topic embedding and,
/// for TGM, the composed LSTM matrices.
class Decoder {
 public:
  Decoder(const CaptionModelParams& params, std::span<const double> features,
          std::span<const double> topics);

  const CaptionModelParams& params() const { return *params_; }
  const DecoderState& initial_state() const { return initial_; }
  const Tensor& input_weights() const;
  const Tensor& recurrent_weights() const;
  const std::vector<double>& topic_embedding() const { return topic_embedding_; }
  const std::vector<double>& topics() const { return topics_; }
  const std::vector<double>& encoder_input() const { return encoder_input_; }

  std::vector<double> step_input(std::size_t prev_token) const;
  DecoderState advance(const DecoderState& state, std::size_t prev_token) const;
  std::vector<double> log_probs(const DecoderState& state) const;

 private:
  const CaptionModelParams* params_;
  std::vector<double> topics_;
  std::vector<double> encoder_input_;
  std::vector<double> topic_embedding_;
  Tensor composed_wx_;
  Tensor composed_wh_;
  DecoderState initial_;
};

/// Word ids truncated to max_length - 1, then EOS. Throws on an empty caption.
std::vector<std::size_t> caption_targets(const std::vector<std::string>& tokens,
                                         const Vocabulary& vocab, std::size_t max_length);

/// -sum_t log Pr(target_t | video, previous targets) under teacher forcing.
/// Dropout is active iff `dropout_rng` is given. When `grads` is given,
/// scale * gradient is accumulated into it.
double sequence_loss(const CaptionModelParams& params, std::span<const double> features,
                     std::span<const double> topics, const std::vector<std::size_t>& targets,
                     Rng* dropout_rng = nullptr, CaptionModelParams* grads = nullptr,
                     double scale = 1.0);

/// Per-step output distributions in evaluation mode (teacher forced).
std::vector<std::vector<double>> teacher_forced_distributions(
    const CaptionModelParams& params, std::span<const double> features,
    std::span<const double> topics, const std::vector<std::size_t>& targets);

struct CaptionPair {
  std::size_t video = 0;  // index into the training set's features/topics
  std::vector<std::size_t> targets;
};

struct CaptionDataset {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> topics;
  std::vector<CaptionPair> pairs;
};

/// Pairs every caption of every record with the record's feature vector and
/// the given topic vector.
CaptionDataset build_caption_dataset(const std::vector<const VideoRecord*>& records,
                                     const FeatureManifest& manifest,
                                     const std::vector<std::vector<double>>& topics,
                                     const Vocabulary& vocab, std::size_t max_length);

struct CaptionerTrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  AdamConfig adam;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;
};

struct CaptionerTrainResult {
  CaptionModelParams params;
  std::vector<double> epoch_losses;  // mean sequence loss per epoch
};

CaptionerTrainResult train_captioner(CaptionModelParams params, const CaptionDataset& data,
                                     const CaptionerTrainOptions& options);

struct BeamHypothesis {
  std::vector<std::size_t> tokens;  // generated tokens, EOS included when emitted
  double log_prob = 0.0;
  DecoderState state;
  bool finished = false;
};

/// Keeps the `beam_width` best partial captions by summed log-probability;
/// a hypothesis ends on EOS or at max_length tokens. Returns the best finished
/// hypothesis; equal scores resolve to the lexicographically smaller tokens.
BeamHypothesis beam_search(const Decoder& decoder, std::size_t beam_width,
                           std::size_t max_length = 30);
BeamHypothesis beam_search(const CaptionModelParams& params, std::span<const double> features,
                           std::span<const double> topics, std::size_t beam_width,
                           std::size_t max_length = 30);

/// Argmax at every step, lowest token id on ties.
BeamHypothesis greedy_decode(const Decoder& decoder, std::size_t max_length = 30);

/// exp(total NLL / total predicted tokens), evaluation mode.
double perplexity(const CaptionModelParams& params, const CaptionDataset& data);

}  // namespace tgc
