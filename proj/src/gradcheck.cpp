// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tgc Authors

#include "tgc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <quadmath.h>

namespace tgc {

std::vector<double> flatten(const CaptionModelParams& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  for (const auto& [name, t] : params.named_tensors())
    out.insert(out.end(), t->values().begin(), t->values().end());
  return out;
}

void unflatten(std::span<const double> flat, CaptionModelParams& params) {
  std::size_t pos = 0;
  for (auto& [name, t] : params.named_tensors()) {
    require(pos + t->size() <= flat.size(), "unflatten: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t->size(), t->values().begin());
    pos += t->size();
  }
  require(pos == flat.size(), "unflatten: vector too long");
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> out;
  for (const Tensor* t : params.tensors())
    out.insert(out.end(), t->values().begin(), t->values().end());
  return out;
}

void unflatten(std::span<const double> flat, MlpParams& params) {
  std::size_t pos = 0;
  for (Tensor* t : params.tensors()) {
    require(pos + t->size() <= flat.size(), "unflatten: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t->size(), t->values().begin());
    pos += t->size();
  }
  require(pos == flat.size(), "unflatten: vector too long");
}

namespace {

// Quad precision keeps the reference loss's rounding far below the change a
// 1e-6 perturbation makes, even for coordinates with gradients near 1e-9.
using Real = __float128;
using RealVec = std::vector<Real>;

Real exp_r(Real x) { return expq(x); }
Real log_r(Real x) { return logq(x); }
Real tanh_r(Real x) { return tanhq(x); }

RealVec mat_vec(const Tensor& w, const RealVec& x, const Tensor* bias) {
  RealVec y(w.rows(), 0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    Real acc = bias ? static_cast<Real>((*bias)[r]) : Real(0);
    for (std::size_t c = 0; c < w.cols(); ++c) acc += static_cast<Real>(w(r, c)) * x[c];
    y[r] = acc;
  }
  return y;
}

RealVec widen(std::span<const double> v) { return RealVec(v.begin(), v.end()); }

RealVec log_softmax_ext(const RealVec& z) {
  Real m = z[0];
  for (Real v : z) m = v > m ? v : m;
  Real sum = 0;
  for (Real v : z) sum += exp_r(v - m);
  const Real lse = m + log_r(sum);
  RealVec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

RealVec mlp_logits(const MlpParams& p, std::span<const double> x) {
  RealVec h = mat_vec(p.w1, widen(x), &p.b1);
  for (Real& v : h) v = tanh_r(v);
  return mat_vec(p.w2, h, &p.b2);
}

// Dense W(z) = sum_f a[:, f] (b z)_f c[f, :].
void compose_ext(std::span<const double> z, const FactorTriple& t, std::vector<RealVec>& out) {
  const std::size_t H = t.a.rows(), F = t.a.cols(), C = t.c.cols();
  RealVec s(F, 0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t k = 0; k < z.size(); ++k) s[f] += static_cast<Real>(t.b(f, k)) * z[k];
  out.assign(H, RealVec(C, 0));
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t j = 0; j < C; ++j)
        out[i][j] += static_cast<Real>(t.a(i, f)) * s[f] * static_cast<Real>(t.c(f, j));

}

Real sigmoid_ext(Real x) { return 1 / (1 + exp_r(-x)); }

}  // namespace

namespace {

Real kl_ext(const MlpParams& p, std::span<const double> x, std::span<const double> target) {
  const RealVec logq = log_softmax_ext(mlp_logits(p, x));
  Real loss = 0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] <= 0.0) continue;
    Real q = exp_r(logq[k]);
    if (q < static_cast<Real>(kKlFloor)) q = kKlFloor;
    loss += static_cast<Real>(target[k]) * (log_r(static_cast<Real>(target[k])) - log_r(q));
  }
  return loss;
}

}  // namespace

Real128 reference_kl_loss(const MlpParams& p, std::span<const double> x,
                          std::span<const double> target) {
  return kl_ext(p, x, target);
}

Real128 reference_cross_entropy(const MlpParams& p, std::span<const double> x,
                                    std::size_t label) {
  return -log_softmax_ext(mlp_logits(p, x))[label];
}

Real128 reference_sequence_loss(const CaptionModelParams& p, std::span<const double> features,
                                    std::span<const double> topics,
                                    const std::vector<std::size_t>& targets) {
  const auto& cfg = p.config;
  const std::size_t H = cfg.hidden;
  RealVec enc_in = widen(features);
  if (cfg.variant == Variant::kTce) enc_in.insert(enc_in.end(), topics.begin(), topics.end());
  RealVec h = mat_vec(p.enc_w, enc_in, &p.enc_b);
  RealVec c(H, 0);

  RealVec ze;
  if (cfg.variant == Variant::kTead || cfg.variant == Variant::kTemd)
    ze = mat_vec(p.topic_w, widen(topics), &p.topic_b);

  // Stacked gate matrices, gate-major rows.
  std::vector<RealVec> wx, wh;
  if (cfg.variant == Variant::kTgm) {
    for (std::size_t g = 0; g < 4; ++g) {
      std::vector<RealVec> part;
      compose_ext(topics, p.tgm_x[g], part);
      wx.insert(wx.end(), part.begin(), part.end());
      compose_ext(topics, p.tgm_h[g], part);
      wh.insert(wh.end(), part.begin(), part.end());
    }
  } else {
    for (std::size_t r = 0; r < 4 * H; ++r) {
      wx.push_back(widen(p.lstm_wx.row(r)));
      wh.push_back(widen(p.lstm_wh.row(r)));
    }
  }

  Real loss = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const std::size_t prev = t == 0 ? Vocabulary::kBos : targets[t - 1];
    RealVec in = widen(p.embed.row(prev));
    switch (cfg.variant) {
      case Variant::kTcd: in.insert(in.end(), topics.begin(), topics.end()); break;
      case Variant::kTead: for (std::size_t j = 0; j < H; ++j) in[j] += ze[j]; break;
      case Variant::kTemd: for (std::size_t j = 0; j < H; ++j) in[j] *= ze[j]; break;
      default: break;
    }
    RealVec a(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
      Real acc = p.lstm_b[r];
      for (std::size_t j = 0; j < in.size(); ++j) acc += wx[r][j] * in[j];
      for (std::size_t j = 0; j < H; ++j) acc += wh[r][j] * h[j];
      a[r] = acc;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const Real i = sigmoid_ext(a[j]), f = sigmoid_ext(a[H + j]);
      const Real o = sigmoid_ext(a[2 * H + j]), g = tanh_r(a[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * tanh_r(c[j]);
    }
    RealVec logits = mat_vec(p.embed, h, &p.out_b);
    loss -= log_softmax_ext(logits)[targets[t]];
  }
  return loss;
}

ScalarFn shifted_loss(std::function<Real128(std::span<const double>)> loss,
                      std::span<const double> x0) {
  const Real128 base = loss(x0);
  return [loss = std::move(loss), base](std::span<const double> x) {
    return static_cast<double>(loss(x) - base);
  };
}

namespace {

std::vector<double> normal_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

GradcheckEntry check_mlp(const std::string& name, Rng& rng, bool kl) {
  constexpr std::size_t kIn = 6, kHidden = 5, kOut = 4;
  MlpParams p = init_mlp(kIn, kHidden, kOut, rng);
  for (Tensor* t : p.tensors())
    for (double& v : t->values()) v += rng.uniform(-0.5, 0.5);
  const auto x = normal_vector(kIn, rng);
  const auto target = rng.dirichlet(std::vector<double>(kOut, 1.0));
  const std::size_t label = rng.below(kOut);

  MlpParams grads = p.zeros_like();
  if (kl)
    kl_loss(p, x, target, &grads);
  else
    cross_entropy_loss(p, x, label, &grads);

  MlpParams probe = p;
  const auto flat = flatten(p);
  const ScalarFn loss = shifted_loss(
      [&](std::span<const double> v) {
        unflatten(v, probe);
        return kl ? reference_kl_loss(probe, x, target) : reference_cross_entropy(probe, x, label);
      },
      flat);
  const auto analytic = flatten(grads);
  return {name, flat.size(), gradient_check(loss, flat, analytic)};
}

GradcheckEntry check_variant(Variant variant, Rng& rng) {
  CaptionerConfig cfg;
  cfg.variant = variant;
  cfg.feature_dim = 5;
  cfg.num_topics = 3;
  cfg.vocab_size = 20;
  cfg.hidden = 8;
  cfg.factors = 4;
  cfg.init_scale = 0.3;
  CaptionModelParams p = init_caption_model(cfg, rng);
  const auto features = normal_vector(cfg.feature_dim, rng);
  const auto topics = rng.dirichlet(std::vector<double>(cfg.num_topics, 1.0));
  std::vector<std::size_t> targets;
  for (int t = 0; t < 5; ++t) targets.push_back(3 + rng.below(cfg.vocab_size - 3));
  targets.push_back(Vocabulary::kEos);

  CaptionModelParams grads = p.zeros_like();
  sequence_loss(p, features, topics, targets, nullptr, &grads);

  CaptionModelParams probe = p;
  const auto flat = flatten(p);
  const ScalarFn loss = shifted_loss(
      [&](std::span<const double> v) {
        unflatten(v, probe);
        return reference_sequence_loss(probe, features, topics, targets);
      },
      flat);
  const auto analytic = flatten(grads);
  return {"sequence_loss/" + std::string(variant_name(variant)), flat.size(),
          gradient_check(loss, flat, analytic)};
}

}  // namespace

std::vector<GradcheckEntry> gradient_suite(std::uint64_t seed) {
  std::vector<GradcheckEntry> out;
  Rng kl_rng(derive_seed(seed, 1));
  out.push_back(check_mlp("kl_loss", kl_rng, true));
  Rng ce_rng(derive_seed(seed, 2));
  out.push_back(check_mlp("cross_entropy_loss", ce_rng, false));
  for (std::size_t i = 0; i < kAllVariants.size(); ++i) {
    Rng rng(derive_seed(seed, 10 + i));
    out.push_back(check_variant(kAllVariants[i], rng));
  }
  return out;
}

}  // namespace tgc
