// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cyclevc {

/// One utterance: `frames` x `dim` mel-cepstral coefficients, frame-major.
struct FeatureSequence {
  std::string utterance_id;
  std::string speaker_id;
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  FeatureSequence() = default;
  FeatureSequence(std::size_t frames, std::size_t dim) : frames(frames), dim(dim), values(frames * dim, 0.0f) {}

  float& at(std::size_t t, std::size_t d) { return values[t * dim + d]; }
  float at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }
  const float* frame(std::size_t t) const { return values.data() + t * dim; }

  // Throws FormatError when the sizes disagree, T or D is zero, or a value
  // is not finite.
  void validate() const;
};

/// "VCF1" layout, little-endian: magic, u32 frames, u32 dim, u32 reserved (0),
/// then frames * dim float32 values, frame-major.
inline constexpr char kFeatureMagic[4] = {'V', 'C', 'F', '1'};
inline constexpr std::size_t kFeatureHeaderBytes = 16;

std::vector<std::uint8_t> encode_features(const FeatureSequence& seq);
FeatureSequence decode_features(const std::vector<std::uint8_t>& bytes, std::size_t expected_dim);

void write_features(const FeatureSequence& seq, const std::filesystem::path& path);

// The utterance id is taken from the file stem.
FeatureSequence read_features(const std::filesystem::path& path, std::size_t expected_dim = 36);

}  // namespace cyclevc
