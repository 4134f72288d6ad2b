// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cyclevc/corpus/features.hpp"
#include "cyclevc/diffcore/random.hpp"
#include "cyclevc/diffcore/tensor.hpp"

namespace cyclevc {

/// A synthetic speaker: utterance = mixing * content + bias + N(0, noise^2).
struct SpeakerSpec {
  std::string id;
  std::string group;            // "F" or "M"
  std::vector<double> mixing;   // dim x dim, row-major; empty for imported speakers
  std::vector<double> bias;     // dim
  double noise = 0.0;
};

struct Corpus {
  std::size_t dim = 36;
  std::vector<SpeakerSpec> speakers;
  std::vector<std::vector<FeatureSequence>> train;  // [speaker][utterance]
  std::vector<std::vector<FeatureSequence>> eval;   // [speaker][content], parallel across speakers
  std::vector<std::string> eval_content_ids;

  std::size_t speaker_index(std::string_view id) const;  // UnknownSpeakerError when absent
  std::vector<std::string> speaker_ids() const;
};

struct CorpusOptions {
  std::size_t speakers = 4;
  std::size_t train_per_speaker = 81;
  std::size_t eval_per_speaker = 35;
  std::size_t frames = 192;
  std::uint64_t seed = 7;
  double noise = 0.02;
  bool identity_rendering = false;  // mixing = I, bias = 0, noise = 0
};

Corpus generate_corpus(const CorpusOptions& options);

// Keys of the content trajectories used by generate_corpus.
std::uint64_t train_content_key(std::size_t speaker, std::size_t utterance);
std::uint64_t eval_content_key(std::size_t content);

// Smooth content signal: per dimension a sum of 8 random-phase sinusoids with
// periods in [20, 200] frames and amplitudes decaying with the index.
FeatureSequence content_trajectory(std::uint64_t seed, std::uint64_t content_key, std::size_t frames,
                                   std::size_t dim = 36);

// Closed-form conversion A_t A_s^-1 (x - b_s) + b_t between synthetic speakers.
FeatureSequence oracle_convert(const SpeakerSpec& source, const SpeakerSpec& target, const FeatureSequence& x);

double condition_number(const std::vector<double>& matrix, std::size_t dim);

// <root>/<speaker>/<split>/<utt-id>.vcf plus <root>/manifest.txt.
void write_corpus(const Corpus& corpus, const std::filesystem::path& root);
Corpus load_corpus(const std::filesystem::path& root);

/// A training batch and where each crop came from.
struct Batch {
  Tensor<float> data;  // [batch, dim, crop]
  std::vector<std::size_t> utterances;
  std::vector<std::size_t> offsets;
};

// Draws `batch_size` utterances uniformly (with replacement) and a uniform
// crop of `crop_frames` from each.
Batch next_batch(const std::vector<FeatureSequence>& utterances, std::size_t batch_size, std::size_t crop_frames,
                 Rng& stream);

// [1, dim, T] view of one whole utterance.
Tensor<float> sequence_tensor(const FeatureSequence& seq);
FeatureSequence tensor_sequence(const Tensor<float>& t, std::size_t item = 0);

/// Per-dimension z-normalization statistics.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  FeatureSequence apply(const FeatureSequence& seq) const;
  FeatureSequence invert(const FeatureSequence& seq) const;
};

// Population statistics over all given utterances. Needs >= 2 frames and a
// non-zero variance in every dimension.
FeatureStats compute_stats(const std::vector<const FeatureSequence*>& utterances);
FeatureStats training_stats(const Corpus& corpus);

// Corpus with every utterance normalized by `stats`.
Corpus normalized(const Corpus& corpus, const FeatureStats& stats);

}  // namespace cyclevc
