// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/netblocks/model.hpp"

#include <string>

namespace cyclevc {

const char* to_string(DecoderMode mode) { return mode == DecoderMode::shared ? "shared" : "multi"; }

namespace {

template <typename T>
std::vector<GluBlock<T>> glu_stack(std::size_t in_ch, std::size_t hidden, std::size_t count, const ArchConfig& arch,
                                   Rng& rng) {
  std::vector<GluBlock<T>> blocks;
  for (std::size_t i = 0; i < count; ++i) {
    blocks.push_back(GluBlock<T>::make(i == 0 ? in_ch : hidden, hidden, arch.kernel, arch.batch_norm, rng));
  }
  return blocks;
}

template <typename T>
Var<T> run_stack(std::vector<GluBlock<T>>& blocks, Tape<T>& tape, Var<T> h, PassMode mode) {
  for (auto& block : blocks) h = block.forward(tape, h, mode);
  return h;
}

template <typename T>
void collect_stack(std::vector<GluBlock<T>>& blocks, TensorList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".glu" + std::to_string(i));
}

}  // namespace

template <typename T>
Encoder<T> Encoder<T>::make(const ArchConfig& arch, Rng& rng) {
  Encoder enc;
  enc.blocks = glu_stack<T>(arch.feature_dim, arch.hidden, arch.encoder_blocks, arch, rng);
  const std::size_t width = arch.encoder_blocks ? arch.hidden : arch.feature_dim;
  enc.mean_head = Conv1dLayer<T>::make(width, arch.latent, 1, rng);
  enc.log_var_head = Conv1dLayer<T>::make(width, arch.latent, 1, rng);
  return enc;
}

template <typename T>
LatentCode<T> Encoder<T>::forward(Tape<T>& tape, Var<T> x, PassMode mode, const NoiseSource<T>* noise,
                                  std::uint64_t noise_key) {
  Var<T> h = run_stack(blocks, tape, x, mode);
  LatentCode<T> code;
  code.mean = mean_head.forward(tape, h);
  code.log_var = log_var_head.forward(tape, h);
  if (noise) {
    Var<T> eps = tape.constant(noise->normal(code.mean.shape(), noise_key));
    code.z = add(code.mean, mul(exp(scale(code.log_var, T(0.5))), eps));
  } else {
    code.z = code.mean;
  }
  return code;
}

template <typename T>
void Encoder<T>::collect(TensorList<T>& out, const std::string& prefix) {
  collect_stack(blocks, out, prefix);
  mean_head.collect(out, prefix + ".mean_head");
  log_var_head.collect(out, prefix + ".log_var_head");
}

template <typename T>
Tensor<T> identity_planes(std::size_t batch, std::size_t speakers, std::size_t frames, std::size_t identity) {
  if (identity >= speakers) throw UnknownSpeakerError("identity " + std::to_string(identity) + " out of range");
  Tensor<T> one_hot({batch, speakers, frames});
  for (std::size_t b = 0; b < batch; ++b) {
    T* row = one_hot.data() + (b * speakers + identity) * frames;
    std::fill(row, row + frames, T(1));
  }
  return one_hot;
}

// The identity planes join the input of every layer. Training batches hold a
// single speaker, so planes entering only the first block would be a constant
// per channel that batch normalization removes.
template <typename T>
Decoder<T> Decoder<T>::make(const ArchConfig& arch, std::size_t identity_channels, Rng& rng) {
  Decoder dec;
  dec.identity_channels = identity_channels;
  std::size_t width = arch.latent;
  for (std::size_t i = 0; i < arch.decoder_blocks; ++i) {
    dec.blocks.push_back(GluBlock<T>::make(width + identity_channels, arch.hidden, arch.kernel, arch.batch_norm, rng));
    width = arch.hidden;
  }
  dec.output = Conv1dLayer<T>::make(width + identity_channels, arch.feature_dim, 1, rng);
  return dec;
}

template <typename T>
Var<T> Decoder<T>::forward(Tape<T>& tape, Var<T> z, std::optional<std::size_t> identity, PassMode mode) {
  Var<T> planes;
  if (identity_channels > 0) {
    if (!identity || *identity >= identity_channels) {
      throw UnknownSpeakerError("decoder needs a speaker identity below " + std::to_string(identity_channels));
    }
    planes = tape.constant(identity_planes<T>(z.dim(0), identity_channels, z.dim(2), *identity));
  }
  auto with_identity = [&](Var<T> h) { return planes.valid() ? concat(h, planes, 1) : h; };
  Var<T> h = z;
  for (auto& block : blocks) h = block.forward(tape, with_identity(h), mode);
  return output.forward(tape, with_identity(h));
}

template <typename T>
void Decoder<T>::collect(TensorList<T>& out, const std::string& prefix) {
  collect_stack(blocks, out, prefix);
  output.collect(out, prefix + ".output");
}

template <typename T>
Critic<T> Critic<T>::make(const ArchConfig& arch, Rng& rng) {
  Critic critic;
  critic.blocks = glu_stack<T>(arch.feature_dim, arch.hidden, arch.critic_blocks, arch, rng);
  const std::size_t width = arch.critic_blocks ? arch.hidden : arch.feature_dim;
  critic.head = Conv1dLayer<T>::make(width, 1, 1, rng);
  return critic;
}

template <typename T>
Var<T> Critic<T>::forward(Tape<T>& tape, Var<T> x, PassMode mode) {
  Var<T> h = run_stack(blocks, tape, x, mode);
  Var<T> pooled = mean(h, {2}, true);  // [batch, C, 1]
  Var<T> score = head.forward(tape, pooled);
  return reshape(score, Shape{x.dim(0)});
}

template <typename T>
void Critic<T>::collect(TensorList<T>& out, const std::string& prefix) {
  collect_stack(blocks, out, prefix);
  head.collect(out, prefix + ".head");
}

template <typename T>
ModelBundle<T> ModelBundle<T>::create(const ArchConfig& arch, DecoderMode mode, std::size_t speakers,
                                      bool with_critics, std::uint64_t seed) {
  if (speakers == 0) throw ConfigError("a model needs at least one speaker");
  ModelBundle bundle;
  bundle.arch = arch;
  bundle.mode = mode;
  bundle.speakers = speakers;
  Rng enc_rng = Rng::keyed(seed, {tag_key("encoder")});
  bundle.encoder = Encoder<T>::make(arch, enc_rng);
  if (mode == DecoderMode::shared) {
    Rng rng = Rng::keyed(seed, {tag_key("decoder"), 0});
    bundle.decoders.push_back(Decoder<T>::make(arch, speakers, rng));
  } else {
    for (std::size_t s = 0; s < speakers; ++s) {
      Rng rng = Rng::keyed(seed, {tag_key("decoder"), s});
      bundle.decoders.push_back(Decoder<T>::make(arch, 0, rng));
    }
  }
  if (with_critics) {
    for (std::size_t s = 0; s < speakers; ++s) {
      Rng rng = Rng::keyed(seed, {tag_key("critic"), s});
      bundle.critics.push_back(Critic<T>::make(arch, rng));
    }
  }
  return bundle;
}

template <typename T>
LatentCode<T> ModelBundle<T>::encode(Tape<T>& tape, Var<T> x, PassMode pass, const NoiseSource<T>* noise,
                                     std::uint64_t noise_key) {
  if (x.value().rank() != 3 || x.dim(1) != arch.feature_dim) {
    throw ShapeError("encode: expected [batch, " + std::to_string(arch.feature_dim) + ", T], got " +
                     shape_string(x.shape()));
  }
  return encoder.forward(tape, x, pass, noise, noise_key);
}

template <typename T>
Decoder<T>& ModelBundle<T>::decoder_for(std::size_t speaker) {
  if (speaker >= speakers) {
    throw UnknownSpeakerError("speaker index " + std::to_string(speaker) + " unknown to a " +
                              std::to_string(speakers) + "-speaker model");
  }
  return mode == DecoderMode::shared ? decoders.at(0) : decoders.at(speaker);
}

template <typename T>
Var<T> ModelBundle<T>::decode(Tape<T>& tape, Var<T> z, std::size_t target, PassMode pass) {
  Decoder<T>& dec = decoder_for(target);
  if (mode == DecoderMode::multi) return dec.forward(tape, z, std::nullopt, pass);
  return dec.forward(tape, z, target, pass);
}

template <typename T>
Var<T> ModelBundle<T>::criticize(Tape<T>& tape, Var<T> x, std::size_t speaker, PassMode pass) {
  if (critics.empty()) throw MissingCriticError("model variant has no critics");
  if (speaker >= critics.size()) {
    throw MissingCriticError("no critic for speaker index " + std::to_string(speaker));
  }
  return critics[speaker].forward(tape, x, pass);
}

template <typename T>
TensorList<T> ModelBundle<T>::encoder_tensors() {
  TensorList<T> out;
  encoder.collect(out, "encoder");
  return out;
}

template <typename T>
TensorList<T> ModelBundle<T>::decoder_tensors() {
  TensorList<T> out;
  for (std::size_t i = 0; i < decoders.size(); ++i) decoders[i].collect(out, "decoder" + std::to_string(i));
  return out;
}

template <typename T>
TensorList<T> ModelBundle<T>::critic_tensors() {
  TensorList<T> out;
  for (std::size_t i = 0; i < critics.size(); ++i) critics[i].collect(out, "critic" + std::to_string(i));
  return out;
}

template <typename T>
TensorList<T> ModelBundle<T>::all_tensors() {
  TensorList<T> out = encoder_tensors();
  for (auto& nt : decoder_tensors()) out.push_back(nt);
  for (auto& nt : critic_tensors()) out.push_back(nt);
  return out;
}

template Tensor<float> identity_planes<float>(std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<double> identity_planes<double>(std::size_t, std::size_t, std::size_t, std::size_t);
template struct Encoder<float>;
template struct Encoder<double>;
template struct Decoder<float>;
template struct Decoder<double>;
template struct Critic<float>;
template struct Critic<double>;
template struct ModelBundle<float>;
template struct ModelBundle<double>;

}  // namespace cyclevc
