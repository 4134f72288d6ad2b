// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>

#include "cyclevc/trainer/trainer.hpp"

namespace cyclevc {
namespace {

std::vector<std::size_t> corpus_indices(const TrainConfig& config, const Corpus& corpus) {
  std::vector<std::size_t> out;
  if (config.speakers.empty()) {
    for (std::size_t i = 0; i < corpus.speakers.size(); ++i) out.push_back(i);
  } else {
    for (const auto& id : config.speakers) out.push_back(corpus.speaker_index(id));
  }
  return out;
}

void check_corpus(const TrainConfig& config, const Corpus& corpus, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("corpus has no speakers");
  if (uses_cycle(config.variant) && indices.size() < 2) {
    throw ConfigError(std::string("variant ") + to_string(config.variant) + " needs at least 2 speakers, got " +
                      std::to_string(indices.size()));
  }
  for (std::size_t i : indices) {
    const auto& utts = corpus.train.at(i);
    if (utts.empty()) throw ConfigError("speaker '" + corpus.speakers[i].id + "' has no training utterances");
    for (const auto& u : utts) {
      if (u.frames < config.crop_frames) {
        throw ConfigError("training utterance '" + u.utterance_id + "' has " + std::to_string(u.frames) +
                          " frames, fewer than crop_frames = " + std::to_string(config.crop_frames));
      }
    }
  }
}

std::vector<Tensor<float>*> generator_params(ModelBundle<float>& m) {
  TensorList<float> list = m.encoder_tensors();
  for (auto& nt : m.decoder_tensors()) list.push_back(nt);
  return trainable_tensors(list);
}

std::vector<Tensor<float>*> critic_params(ModelBundle<float>& m) { return trainable_tensors(m.critic_tensors()); }

void zero_grads(ModelBundle<float>& m) {
  for (auto& nt : m.all_tensors()) nt.tensor->zero_grad();
}

class Trainer {
 public:
  Trainer(const TrainConfig& config, const Corpus& corpus, const StepObserver& observer)
      : config_(config), observer_(observer), weights_(config.weights()) {
    ckpt_ = initial_checkpoint(config, corpus);
    indices_ = corpus_indices(config, corpus);
    data_ = normalized(corpus, ckpt_.stats);
    batch_rng_.set_state(ckpt_.batch_stream);
    for (std::size_t i = 0; i < indices_.size(); ++i) speakers_.push_back(i);
    gen_params_ = generator_params(ckpt_.model);
    critic_params_ = critic_params(ckpt_.model);
  }

  TrainResult run() {
    start_ = std::chrono::steady_clock::now();
    const std::size_t stage1 = config_.stage1_steps;
    const std::size_t total = config_.total_steps();
    for (std::size_t step = 0; step < total; ++step) {
      try {
        if (step < stage1) {
          stage1_step(step);
        } else {
          stage2_step(step);
        }
      } catch (const NumericError& e) {
        throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": " + e.what(), trace_);
      }
    }
    return {std::move(ckpt_), std::move(trace_)};
  }

 private:
  Var<float> draw(Tape<float>& tape, std::size_t speaker) {
    Batch b = next_batch(data_.train[indices_[speaker]], config_.batch_size, config_.crop_frames, batch_rng_);
    return tape.constant(std::move(b.data));
  }

  std::size_t source_of(std::size_t step) const { return step % speakers_.size(); }

  // The critic of the single-conversion adversarial variant sees one target
  // per step, rotating over the other speakers.
  std::size_t rotating_target(std::size_t step, std::size_t source) const {
    const std::size_t n = speakers_.size();
    if (n == 1) return source;
    const std::size_t k = (step / n) % (n - 1);
    return (source + 1 + k) % n;
  }

  LossReport<float> plain_loss(LossContext<float>& ctx, Var<float> x, std::size_t source) {
    if (uses_cycle(config_.variant)) {
      return cyclevae_total(ckpt_.model, ctx, x, source, std::span<const std::size_t>(speakers_),
                            LossWeights{0.0, weights_.cycle});
    }
    return vae_loss(ckpt_.model, ctx, x, source);
  }

  LossReport<float> adversarial_loss(Tape<float>& tape, LossContext<float>& ctx, Var<float> x, std::size_t source,
                                     std::size_t step) {
    RealBatches<float> reals(speakers_.size());
    reals[source] = x;
    if (config_.variant == Variant::vaewgan) {
      const std::size_t target = rotating_target(step, source);
      if (target != source) reals[target] = draw(tape, target);
      return vaewgan_loss(ckpt_.model, ctx, x, source, target, reals[target], weights_);
    }
    for (std::size_t y : speakers_) {
      if (y != source) reals[y] = draw(tape, y);
    }
    return cyclevaewgan_total(ckpt_.model, ctx, x, source, std::span<const std::size_t>(speakers_), reals, weights_);
  }

  void stage1_step(std::size_t step) {
    const std::size_t source = source_of(step);
    Tape<float> tape;
    for (auto* p : critic_params_) tape.freeze(*p);
    Var<float> x = draw(tape, source);
    const NoiseSource<float> noise(config_.seed, step);
    LossContext<float> ctx{tape, &noise, PassMode::train()};
    LossReport<float> r = plain_loss(ctx, x, source);
    tape.backward(r.total);
    adam_step<float>(gen_params_, ckpt_.generator_opt);
    zero_grads(ckpt_.model);
    finish(step, 1, source, r, 0.0);
  }

  void stage2_step(std::size_t step) {
    const std::size_t source = source_of(step);
    double critic_value = 0.0;
    for (std::size_t k = 0; k < config_.critic_steps; ++k) {
      Tape<float> tape;
      for (auto* p : gen_params_) tape.freeze(*p);
      Var<float> x = draw(tape, source);
      const NoiseSource<float> noise(config_.seed ^ tag_key("critic-steps"), step * config_.critic_steps + k);
      LossContext<float> ctx{tape, &noise, PassMode::train_frozen_stats()};
      LossReport<float> r = adversarial_loss(tape, ctx, x, source, step);
      Var<float> wgan_sum;
      for (const auto& v : r.wgan) {
        if (v.valid()) wgan_sum = wgan_sum.valid() ? add(wgan_sum, v) : v;
      }
      Var<float> critic_loss = negate(wgan_sum);
      critic_value = critic_loss.item();
      tape.backward(critic_loss);
      adam_step<float>(critic_params_, ckpt_.critic_opt);
      clip_weights<float>(critic_params_, static_cast<float>(config_.clip_c));
      zero_grads(ckpt_.model);
      if (observer_) observer_(StepEvent{step, 2, true, ckpt_});
    }

    Tape<float> tape;
    for (auto* p : critic_params_) tape.freeze(*p);
    Var<float> x = draw(tape, source);
    const NoiseSource<float> noise(config_.seed, step);
    LossContext<float> ctx{tape, &noise, PassMode::train()};
    LossReport<float> r = adversarial_loss(tape, ctx, x, source, step);
    tape.backward(r.total);
    adam_step<float>(gen_params_, ckpt_.generator_opt);
    zero_grads(ckpt_.model);
    finish(step, 2, source, r, critic_value);
  }

  void finish(std::size_t step, int stage, std::size_t source, const LossReport<float>& r, double critic) {
    TraceEntry e;
    e.step = step;
    e.stage = stage;
    e.source = source;
    e.total = r.total.item();
    e.kl = r.value(r.kl);
    e.recon = r.value(r.recon);
    e.cycle_kl = r.value(r.cycle_kl);
    e.cycle_recon = r.value(r.cycle_recon);
    for (const auto& v : r.wgan) e.wgan += r.value(v);
    e.critic = critic;
    e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    if (!std::isfinite(e.total)) throw NumericError("non-finite loss");
    trace_.entries.push_back(e);
    ckpt_.step = step + 1;
    ckpt_.batch_stream = batch_rng_.state();
    if (observer_) observer_(StepEvent{step, stage, false, ckpt_});
  }

  const TrainConfig& config_;
  const StepObserver& observer_;
  LossWeights weights_;
  Checkpoint ckpt_;
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> speakers_;
  Corpus data_;
  Rng batch_rng_;
  std::vector<Tensor<float>*> gen_params_;
  std::vector<Tensor<float>*> critic_params_;
  LossTrace trace_;
  std::chrono::steady_clock::time_point start_;
};

FeatureSequence run_conversion(Checkpoint& ckpt, const FeatureSequence& x, std::size_t target) {
  if (x.dim != ckpt.config.arch.feature_dim) {
    throw ShapeError("input has " + std::to_string(x.dim) + " coefficients per frame, model expects " +
                     std::to_string(ckpt.config.arch.feature_dim));
  }
  x.validate();
  Tape<float> tape;
  for (const auto& nt : ckpt.model.all_tensors()) tape.freeze(*nt.tensor);
  Var<float> in = tape.constant(sequence_tensor(ckpt.stats.apply(x)));
  LatentCode<float> code = ckpt.model.encode(tape, in, PassMode::eval(), nullptr, 0);
  Var<float> y = ckpt.model.decode(tape, code.mean, target, PassMode::eval());
  FeatureSequence out = ckpt.stats.invert(tensor_sequence(y.value()));
  out.utterance_id = x.utterance_id;
  out.speaker_id = ckpt.speaker_ids[target];
  return out;
}

}  // namespace

Checkpoint initial_checkpoint(const TrainConfig& config, const Corpus& corpus) {
  config.validate();
  const std::vector<std::size_t> indices = corpus_indices(config, corpus);
  check_corpus(config, corpus, indices);
  Checkpoint c;
  c.config = config;
  for (std::size_t i : indices) {
    c.speaker_ids.push_back(corpus.speakers[i].id);
    c.speaker_groups.push_back(corpus.speakers[i].group);
  }
  // Statistics come from every training utterance of the chosen speakers and
  // are rounded to float so that the checkpoint stores them exactly.
  std::vector<const FeatureSequence*> utts;
  for (std::size_t i : indices) {
    for (const auto& u : corpus.train[i]) utts.push_back(&u);
  }
  c.stats = compute_stats(utts);
  for (auto& v : c.stats.mean) v = static_cast<float>(v);
  for (auto& v : c.stats.stddev) v = static_cast<float>(v);
  c.model = ModelBundle<float>::create(config.arch, decoder_mode(config.variant), indices.size(),
                                       uses_wgan(config.variant), config.seed);
  c.generator_opt.options = config.adam;
  c.critic_opt.options = config.adam;
  c.batch_stream = Rng::keyed(config.seed, {tag_key("batch")}).state();
  return c;
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, const StepObserver& observer) {
  Trainer trainer(config, corpus, observer);
  return trainer.run();
}

FeatureSequence convert(Checkpoint& ckpt, const FeatureSequence& x, std::string_view source,
                        std::string_view target) {
  ckpt.speaker_index(source);
  return run_conversion(ckpt, x, ckpt.speaker_index(target));
}

FeatureSequence cycle_convert(Checkpoint& ckpt, const FeatureSequence& x, std::string_view source,
                              std::string_view target) {
  return convert(ckpt, convert(ckpt, x, source, target), target, source);
}

}  // namespace cyclevc
