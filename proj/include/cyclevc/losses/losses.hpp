// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cyclevc/netblocks/model.hpp"

namespace cyclevc {

struct LossWeights {
  double wgan = 0.0;   // lambda_1
  double cycle = 0.0;  // lambda_2

  static LossWeights cyclevae() { return {0.0, 1.0}; }
  static LossWeights cyclevaewgan() { return {1.0, 1.0}; }

  void validate() const;
};

// Everything a loss needs besides the model and data: the tape to record on,
// the reparameterization noise, and the batch-norm pass mode.
template <typename T>
struct LossContext {
  Tape<T>& tape;
  const NoiseSource<T>* noise = nullptr;  // null: z = posterior mean
  PassMode mode = PassMode::train();
};

/// Loss terms as recorded on the tape. Parts that a variant does not use stay
/// invalid. With pairwise sums the parts are the summed contributions, so
///   total = kl + recon + w.cycle * (cycle_kl + cycle_recon) + w.wgan * sum(wgan)
/// holds for every variant.
template <typename T>
struct LossReport {
  Var<T> total;
  Var<T> kl;
  Var<T> recon;
  Var<T> cycle_kl;
  Var<T> cycle_recon;
  std::vector<Var<T>> wgan;  // per speaker index; invalid entries unused
  LossWeights weights;

  double value(const Var<T>& v) const { return v.valid() ? static_cast<double>(v.item()) : 0.0; }
  double wgan_value(std::size_t speaker) const {
    return speaker < wgan.size() ? value(wgan[speaker]) : 0.0;
  }
  double reconstructed_total() const;
};

// Noise keys: the self path sample of x is shared by every pair, the cycle
// re-encoding of x'_{X->Y} has one key per target.
std::uint64_t self_noise_key();
std::uint64_t cycle_noise_key(std::size_t target);

// Mean over batch and frames of sum_dim 0.5 * (mu^2 + exp(logvar) - logvar - 1).
template <typename T>
Var<T> kl_to_standard_normal(const LatentCode<T>& code);

// 0.5 * mean over batch and frames of sum_dim (x - x_hat)^2: the unit-variance
// Gaussian negative log-likelihood without its constant.
template <typename T>
Var<T> recon_nll(Var<T> x, Var<T> x_hat);

// Self-reconstruction loss; routes through the shared decoder with identity
// `source` or through the source speaker's own decoder.
template <typename T>
LossReport<T> vae_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source);

// E_y[D_speaker(y)] - E[D_speaker(fake)].
template <typename T>
Var<T> wgan_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> real, Var<T> fake, std::size_t speaker);

template <typename T>
struct CycleTerms {
  Var<T> kl;
  Var<T> recon;
  Var<T> total() const { return add(kl, recon); }
};

// KL of q(z | x'_{X->Y}) plus reconstruction of x from decode(encode(x'_{X->Y}), X).
template <typename T>
CycleTerms<T> cycle_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                         std::size_t target);

template <typename T>
LossReport<T> cyclevae_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                            std::size_t target, const LossWeights& w);

// Sum over targets Y != X of cyclevae_loss; the vae term alone when X is the
// only speaker.
template <typename T>
LossReport<T> cyclevae_total(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                             std::span<const std::size_t> speakers, const LossWeights& w);

template <typename T>
LossReport<T> vaewgan_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                           std::size_t target, Var<T> real_target, const LossWeights& w);

// Real batches per speaker index, used as the E_y term of each critic.
template <typename T>
using RealBatches = std::vector<Var<T>>;

template <typename T>
LossReport<T> cyclevaewgan_loss(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                                std::size_t target, const RealBatches<T>& reals, const LossWeights& w);

template <typename T>
LossReport<T> cyclevaewgan_total(ModelBundle<T>& model, LossContext<T>& ctx, Var<T> x, std::size_t source,
                                 std::span<const std::size_t> speakers, const RealBatches<T>& reals,
                                 const LossWeights& w);

}  // namespace cyclevc
