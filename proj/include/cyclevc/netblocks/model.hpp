// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cyclevc/netblocks/layers.hpp"

namespace cyclevc {

inline constexpr std::size_t kFeatureDim = 36;

struct ArchConfig {
  std::size_t feature_dim = kFeatureDim;
  std::size_t hidden = 32;
  std::size_t latent = 16;
  std::size_t kernel = 5;
  std::size_t encoder_blocks = 3;
  std::size_t decoder_blocks = 3;
  std::size_t critic_blocks = 3;
  bool batch_norm = true;

  bool operator==(const ArchConfig&) const = default;
};

enum class DecoderMode {
  shared,  // one decoder conditioned on a one-hot speaker identity
  multi,   // one decoder per speaker, no identity input
};

const char* to_string(DecoderMode mode);

// Posterior parameters of q(z|x) per frame and the sample drawn from it.
template <typename T>
struct LatentCode {
  Var<T> mean;     // [batch, L, T']
  Var<T> log_var;  // [batch, L, T']
  Var<T> z;        // [batch, L, T']
};

template <typename T>
struct Encoder {
  std::vector<GluBlock<T>> blocks;
  Conv1dLayer<T> mean_head;
  Conv1dLayer<T> log_var_head;

  static Encoder make(const ArchConfig& arch, Rng& rng);

  // With `noise` set, z = mean + exp(log_var / 2) * eps, eps drawn under
  // `noise_key`; without it, z = mean.
  LatentCode<T> forward(Tape<T>& tape, Var<T> x, PassMode mode, const NoiseSource<T>* noise,
                        std::uint64_t noise_key);
  void collect(TensorList<T>& out, const std::string& prefix);
};

// One-hot speaker identity broadcast over frames: [batch, speakers, frames].
template <typename T>
Tensor<T> identity_planes(std::size_t batch, std::size_t speakers, std::size_t frames, std::size_t identity);

template <typename T>
struct Decoder {
  std::vector<GluBlock<T>> blocks;
  Conv1dLayer<T> output;
  std::size_t identity_channels = 0;

  static Decoder make(const ArchConfig& arch, std::size_t identity_channels, Rng& rng);

  // `identity` selects the one-hot channel set when identity_channels > 0.
  Var<T> forward(Tape<T>& tape, Var<T> z, std::optional<std::size_t> identity, PassMode mode);
  void collect(TensorList<T>& out, const std::string& prefix);
};

// Unbounded scalar score per batch item: GLU stack, mean over time, linear.
template <typename T>
struct Critic {
  std::vector<GluBlock<T>> blocks;
  Conv1dLayer<T> head;

  static Critic make(const ArchConfig& arch, Rng& rng);

  Var<T> forward(Tape<T>& tape, Var<T> x, PassMode mode);  // -> [batch]
  void collect(TensorList<T>& out, const std::string& prefix);
};

/// Encoder, decoder(s) and optional per-speaker critics of one model variant.
template <typename T>
struct ModelBundle {
  ArchConfig arch;
  DecoderMode mode = DecoderMode::shared;
  std::size_t speakers = 0;
  Encoder<T> encoder;
  std::vector<Decoder<T>> decoders;  // 1 (shared) or one per speaker (multi)
  std::vector<Critic<T>> critics;    // empty, or one per speaker

  // Each sub-network draws its initial weights from its own keyed stream, so
  // adding critics never changes encoder or decoder initialization.
  static ModelBundle create(const ArchConfig& arch, DecoderMode mode, std::size_t speakers, bool with_critics,
                            std::uint64_t seed);

  bool has_critics() const { return !critics.empty(); }

  LatentCode<T> encode(Tape<T>& tape, Var<T> x, PassMode mode, const NoiseSource<T>* noise,
                       std::uint64_t noise_key);
  Var<T> decode(Tape<T>& tape, Var<T> z, std::size_t target, PassMode mode);
  Var<T> criticize(Tape<T>& tape, Var<T> x, std::size_t speaker, PassMode mode);

  Decoder<T>& decoder_for(std::size_t speaker);

  TensorList<T> encoder_tensors();
  TensorList<T> decoder_tensors();
  TensorList<T> critic_tensors();
  // Encoder, decoders, then critics; the serialization order.
  TensorList<T> all_tensors();
};

}  // namespace cyclevc
