// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cyclevc {

void LossWeights::validate() const {
  if (!(wgan >= 0.0) || !(cycle >= 0.0) || !std::isfinite(wgan) || !std::isfinite(cycle)) {
    throw ConfigError("loss weights must be finite and non-negative");
  }
}

template <typename T>
double LossReport<T>::reconstructed_total() const {
  double wgan_sum = 0.0;
  for (const auto& v : wgan) wgan_sum += value(v);
  return value(kl) + value(recon) + weights.cycle * (value(cycle_kl) + value(cycle_recon)) + weights.wgan * wgan_sum;
}

std::uint64_t self_noise_key() { return tag_key("self-path"); }

std::uint64_t cycle_noise_key(std::size_t target) {
  return tag_key("cycle-path") ^ ((static_cast<std::uint64_t>(target) + 1) * 0x9e3779b97f4a7c15ULL);
}

template <typename T>
Var<T> kl_to_standard_normal(const LatentCode<T>& code) {
  const Shape& s = code.mean.shape();
  if (s.size() != 3 || code.log_var.shape() != s) {
    throw ShapeError("kl: mean and log-variance must share a [batch, L, T] shape");
  }
  Tape<T>& tape = code.mean.tape();
  Var<T> one = tape.constant(Tensor<T>::scalar(T(1)));
  Var<T> terms = sub(sub(add(square(code.mean), exp(code.log_var)), code.log_var), one);
  const T frames = static_cast<T>(s[0] * s[2]);
  return scale(sum(terms), T(0.5) / frames);
}

template <typename T>
Var<T> recon_nll(Var<T> x, Var<T> x_hat) {
  if (x.shape() != x_hat.shape() || x.shape().size() != 3) {
    throw ShapeError("recon_nll: shapes " + shape_string(x.shape()) + " and " + shape_string(x_hat.shape()) +
                     " differ");
  }
  const T frames = static_cast<T>(x.dim(0) * x.dim(2));
  return scale(sum(square(sub(x, x_hat))), T(0.5) / frames);
}

template <typename T>
Var<T> wgan_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> real, Var<T> fake, std::size_t speaker) {
  Var<T> real_score = mean(model.criticize(ctx.tape, real, speaker, ctx.mode));
  Var<T> fake_score = mean(model.criticize(ctx.tape, fake, speaker, ctx.mode));
  return sub(real_score, fake_score);
}

namespace {

template <typename T>
struct SelfPath {
  LatentCode<T> code;
  Var<T> output;  // x'_{X->X}
  Var<T> kl;
  Var<T> recon;
};

template <typename T>
SelfPath<T> self_path(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source) {
  SelfPath<T> p;
  p.code = model.encode(ctx.tape, x, ctx.mode, ctx.noise, self_noise_key());
  p.output = model.decode(ctx.tape, p.code.z, source, ctx.mode);
  p.kl = kl_to_standard_normal(p.code);
  p.recon = recon_nll(x, p.output);
  return p;
}

template <typename T>
struct CyclePath {
  Var<T> converted;  // x'_{X->Y}
  CycleTerms<T> terms;
};

template <typename T>
CyclePath<T> cycle_path(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, Var<T> z, std::size_t source,
                        std::size_t target) {
  CyclePath<T> p;
  p.converted = model.decode(ctx.tape, z, target, ctx.mode);
  LatentCode<T> code = model.encode(ctx.tape, p.converted, ctx.mode, ctx.noise, cycle_noise_key(target));
  Var<T> back = model.decode(ctx.tape, code.z, source, ctx.mode);
  p.terms.kl = kl_to_standard_normal(code);
  p.terms.recon = recon_nll(x, back);
  return p;
}

template <typename T>
Var<T> weighted(Var<T> v, double w) {
  return scale(v, static_cast<T>(w));
}

template <typename T>
std::vector<std::size_t> targets_of(std::size_t source, std::span<const std::size_t> speakers,
                                    std::size_t model_speakers) {
  if (speakers.empty()) throw ConfigError("speaker set is empty");
  if (std::find(speakers.begin(), speakers.end(), source) == speakers.end()) {
    throw UnknownSpeakerError("source speaker " + std::to_string(source) + " not in the speaker set");
  }
  std::vector<std::size_t> out;
  for (std::size_t s : speakers) {
    if (s >= model_speakers) throw UnknownSpeakerError("speaker index " + std::to_string(s) + " unknown to model");
    if (s != source) out.push_back(s);
  }
  return out;
}

template <typename T>
Var<T> real_for(const RealBatches<T>& reals, std::size_t speaker) {
  if (speaker >= reals.size() || !reals[speaker].valid()) {
    throw ConfigError("no real batch for speaker " + std::to_string(speaker));
  }
  return reals[speaker];
}

template <typename T>
Var<T> accumulate(Var<T> acc, Var<T> v) {
  return acc.valid() ? add(acc, v) : v;
}

}  // namespace

template <typename T>
LossReport<T> vae_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source) {
  SelfPath<T> p = self_path(model, ctx, x, source);
  LossReport<T> r;
  r.kl = p.kl;
  r.recon = p.recon;
  r.total = add(p.kl, p.recon);
  return r;
}

template <typename T>
CycleTerms<T> cycle_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                         std::size_t target) {
  model.decoder_for(target);
  LatentCode<T> code = model.encode(ctx.tape, x, ctx.mode, ctx.noise, self_noise_key());
  return cycle_path(model, ctx, x, code.z, source, target).terms;
}

template <typename T>
LossReport<T> cyclevae_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                            std::size_t target, const LossWeights& w) {
  w.validate();
  SelfPath<T> p = self_path(model, ctx, x, source);
  CyclePath<T> c = cycle_path(model, ctx, x, p.code.z, source, target);
  LossReport<T> r;
  r.weights = w;
  r.kl = p.kl;
  r.recon = p.recon;
  r.cycle_kl = c.terms.kl;
  r.cycle_recon = c.terms.recon;
  r.total = add(add(p.kl, p.recon), weighted(c.terms.total(), w.cycle));
  return r;
}

template <typename T>
LossReport<T> cyclevae_total(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                             std::span<const std::size_t> speakers, const LossWeights& w) {
  w.validate();
  const std::vector<std::size_t> targets = targets_of<T>(source, speakers, model.speakers);
  if (targets.empty()) {
    LossReport<T> r = vae_loss(model, ctx, x, source);
    r.weights = w;
    return r;
  }
  SelfPath<T> p = self_path(model, ctx, x, source);
  Var<T> vae_term = add(p.kl, p.recon);
  LossReport<T> r;
  r.weights = w;
  for (std::size_t y : targets) {
    CyclePath<T> c = cycle_path(model, ctx, x, p.code.z, source, y);
    r.total = accumulate(r.total, add(vae_term, weighted(c.terms.total(), w.cycle)));
    r.cycle_kl = accumulate(r.cycle_kl, c.terms.kl);
    r.cycle_recon = accumulate(r.cycle_recon, c.terms.recon);
  }
  const T pairs = static_cast<T>(targets.size());
  r.kl = scale(p.kl, pairs);
  r.recon = scale(p.recon, pairs);
  return r;
}

template <typename T>
LossReport<T> vaewgan_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                           std::size_t target, Var<T> real_target, const LossWeights& w) {
  w.validate();
  if (model.mode != DecoderMode::shared) {
    throw VariantMismatchError("vaewgan loss needs a shared-decoder model");
  }
  SelfPath<T> p = self_path(model, ctx, x, source);
  Var<T> fake = target == source ? p.output : model.decode(ctx.tape, p.code.z, target, ctx.mode);
  Var<T> critic_term = wgan_loss(model, ctx, real_target, fake, target);
  LossReport<T> r;
  r.weights = w;
  r.kl = p.kl;
  r.recon = p.recon;
  r.wgan.resize(model.speakers);
  r.wgan[target] = critic_term;
  r.total = add(add(p.kl, p.recon), weighted(critic_term, w.wgan));
  return r;
}

template <typename T>
LossReport<T> cyclevaewgan_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                                std::size_t target, const RealBatches<T>& reals, const LossWeights& w) {
  w.validate();
  SelfPath<T> p = self_path(model, ctx, x, source);
  CyclePath<T> c = cycle_path(model, ctx, x, p.code.z, source, target);
  Var<T> self_critic = wgan_loss(model, ctx, real_for(reals, source), p.output, source);
  Var<T> conv_critic = wgan_loss(model, ctx, real_for(reals, target), c.converted, target);
  LossReport<T> r;
  r.weights = w;
  r.kl = p.kl;
  r.recon = p.recon;
  r.cycle_kl = c.terms.kl;
  r.cycle_recon = c.terms.recon;
  r.wgan.resize(model.speakers);
  r.wgan[source] = self_critic;
  r.wgan[target] = target == source ? add(self_critic, conv_critic) : conv_critic;
  Var<T> cyclevae = add(add(p.kl, p.recon), weighted(c.terms.total(), w.cycle));
  r.total = add(add(cyclevae, weighted(self_critic, w.wgan)), weighted(conv_critic, w.wgan));
  return r;
}

template <typename T>
LossReport<T> cyclevaewgan_total(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                                 std::span<const std::size_t> speakers, const RealBatches<T>& reals,
                                 const LossWeights& w) {
  w.validate();
  const std::vector<std::size_t> targets = targets_of<T>(source, speakers, model.speakers);
  if (targets.empty()) {
    LossReport<T> r = vae_loss(model, ctx, x, source);
    r.weights = w;
    return r;
  }
  SelfPath<T> p = self_path(model, ctx, x, source);
  Var<T> vae_term = add(p.kl, p.recon);
  Var<T> self_critic = wgan_loss(model, ctx, real_for(reals, source), p.output, source);
  LossReport<T> r;
  r.weights = w;
  r.wgan.resize(model.speakers);
  for (std::size_t y : targets) {
    CyclePath<T> c = cycle_path(model, ctx, x, p.code.z, source, y);
    Var<T> conv_critic = wgan_loss(model, ctx, real_for(reals, y), c.converted, y);
    Var<T> cyclevae = add(vae_term, weighted(c.terms.total(), w.cycle));
    Var<T> pair = add(add(cyclevae, weighted(self_critic, w.wgan)), weighted(conv_critic, w.wgan));
    r.total = accumulate(r.total, pair);
    r.cycle_kl = accumulate(r.cycle_kl, c.terms.kl);
    r.cycle_recon = accumulate(r.cycle_recon, c.terms.recon);
    r.wgan[y] = conv_critic;
  }
  const T pairs = static_cast<T>(targets.size());
  r.kl = scale(p.kl, pairs);
  r.recon = scale(p.recon, pairs);
  r.wgan[source] = scale(self_critic, pairs);
  return r;
}

#define CYCLEVC_INSTANTIATE_LOSSES(T)                                                                           \
  template struct LossReport<T>;                                                                               \
  template Var<T> kl_to_standard_normal<T>(const LatentCode<T>&);                                              \
  template Var<T> recon_nll<T>(Var<T>, Var<T>);                                                                \
  template LossReport<T> vae_loss<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t);                   \
  template Var<T> wgan_loss<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, Var<T>, std::size_t);                 \
  template CycleTerms<T> cycle_loss<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t, std::size_t);    \
  template LossReport<T> cyclevae_loss<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t, std::size_t,  \
                                          const LossWeights&);                                                 \
  template LossReport<T> cyclevae_total<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t,              \
                                           std::span<const std::size_t>, const LossWeights&);                  \
  template LossReport<T> vaewgan_loss<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t, std::size_t,   \
                                         Var<T>, const LossWeights&);                                          \
  template LossReport<T> cyclevaewgan_loss<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t,           \
                                              std::size_t, const RealBatches<T>&, const LossWeights&);         \
  template LossReport<T> cyclevaewgan_total<T>(ModelBundle<T>&, LossContext<T>&, Var<T>, std::size_t,          \
                                               std::span<const std::size_t>, const RealBatches<T>&,            \
                                               const LossWeights&);

CYCLEVC_INSTANTIATE_LOSSES(float)
CYCLEVC_INSTANTIATE_LOSSES(double)

}  // namespace cyclevc
