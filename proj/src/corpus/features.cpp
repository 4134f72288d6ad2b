// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/corpus/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cyclevc/diffcore/errors.hpp"

namespace cyclevc {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void FeatureSequence::validate() const {
  if (frames == 0 || dim == 0) throw FormatError("feature sequence '" + utterance_id + "' is empty");
  if (values.size() != frames * dim) {
    throw FormatError("feature sequence '" + utterance_id + "' holds " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(frames * dim));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw FormatError("feature sequence '" + utterance_id + "' has a non-finite value");
  }
}

std::vector<std::uint8_t> encode_features(const FeatureSequence& seq) {
  seq.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderBytes + 4 * seq.values.size());
  out.insert(out.end(), std::begin(kFeatureMagic), std::end(kFeatureMagic));
  put_u32(out, static_cast<std::uint32_t>(seq.frames));
  put_u32(out, static_cast<std::uint32_t>(seq.dim));
  put_u32(out, 0);
  for (float v : seq.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FeatureSequence decode_features(const std::vector<std::uint8_t>& bytes, std::size_t expected_dim) {
  if (bytes.size() < kFeatureHeaderBytes) throw FormatError("feature file truncated in header");
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw FormatError("feature file has bad magic");
  FeatureSequence seq;
  seq.frames = get_u32(bytes.data() + 4);
  seq.dim = get_u32(bytes.data() + 8);
  if (get_u32(bytes.data() + 12) != 0) throw FormatError("feature file reserved field is not zero");
  if (seq.dim != expected_dim) {
    throw FormatError("feature file declares dim " + std::to_string(seq.dim) + ", expected " +
                      std::to_string(expected_dim));
  }
  if (seq.frames == 0) throw FormatError("feature file has zero frames");
  const std::size_t count = seq.frames * seq.dim;
  if (bytes.size() != kFeatureHeaderBytes + 4 * count) {
    throw FormatError("feature file payload is " + std::to_string(bytes.size() - kFeatureHeaderBytes) +
                      " bytes, header implies " + std::to_string(4 * count));
  }
  seq.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    seq.values[i] = std::bit_cast<float>(get_u32(bytes.data() + kFeatureHeaderBytes + 4 * i));
  }
  seq.validate();
  return seq;
}

void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_features(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  FeatureSequence seq;
  try {
    seq = decode_features(bytes, expected_dim);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  seq.utterance_id = path.stem().string();
  return seq;
}

}  // namespace cyclevc
