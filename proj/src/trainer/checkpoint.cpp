// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "cyclevc/trainer/trainer.hpp"

namespace cyclevc {
namespace {

constexpr char kMagic[4] = {'V', 'C', 'K', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void block(const std::string& name, std::span<const float> values) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    uint<std::uint64_t>(values.size());
    for (float v : values) uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  const std::uint8_t* take(std::size_t n) {
    if (static_cast<std::size_t>(end_ - p_) < n) throw FormatError("checkpoint truncated");
    const std::uint8_t* at = p_;
    p_ += n;
    return at;
  }
  template <typename U>
  U uint() {
    const std::uint8_t* b = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
  }
  bool done() const { return p_ == end_; }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

std::vector<float> to_floats(const std::vector<double>& v) { return {v.begin(), v.end()}; }

void put_adam(Writer& w, const std::string& prefix, const AdamState<float>& s) {
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    w.block(prefix + ".m." + std::to_string(i), s.m[i]);
    w.block(prefix + ".v." + std::to_string(i), s.v[i]);
  }
}

DecoderMode parse_mode(const std::string& s) {
  if (s == "shared") return DecoderMode::shared;
  if (s == "multi") return DecoderMode::multi;
  throw FormatError("unknown decoder mode '" + s + "' in checkpoint");
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t Checkpoint::speaker_index(std::string_view id) const {
  for (std::size_t i = 0; i < speaker_ids.size(); ++i) {
    if (speaker_ids[i] == id) return i;
  }
  throw UnknownSpeakerError("speaker '" + std::string(id) + "' is not known to this model");
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  auto& ckpt = const_cast<Checkpoint&>(c);  // tensor listing is non-const; nothing is modified
  nlohmann::json meta;
  meta["config"] = ckpt.config;
  meta["decoder_mode"] = to_string(ckpt.model.mode);
  meta["critics"] = ckpt.model.has_critics();
  meta["speakers"] = ckpt.speaker_ids;
  meta["groups"] = ckpt.speaker_groups;
  meta["step"] = ckpt.step;
  meta["generator_adam_step"] = ckpt.generator_opt.step;
  meta["critic_adam_step"] = ckpt.critic_opt.step;
  meta["batch_stream"] = ckpt.batch_stream;
  const std::string meta_text = meta.dump();

  Writer w;
  w.bytes(kMagic, 4);
  w.uint<std::uint16_t>(Checkpoint::kVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text.data(), meta_text.size());

  const TensorList<float> tensors = ckpt.model.all_tensors();
  const std::uint32_t blocks = static_cast<std::uint32_t>(tensors.size() + 2 * ckpt.generator_opt.m.size() +
                                                          2 * ckpt.critic_opt.m.size() + 2);
  w.uint<std::uint32_t>(blocks);
  for (const auto& nt : tensors) w.block(nt.name, nt.tensor->values());
  put_adam(w, "adam.generator", ckpt.generator_opt);
  put_adam(w, "adam.critic", ckpt.critic_opt);
  w.block("stats.mean", to_floats(ckpt.stats.mean));
  w.block("stats.stddev", to_floats(ckpt.stats.stddev));

  auto& bytes = w.data();
  const std::uint64_t sum = fnv1a64(bytes.data(), bytes.size());
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(sum >> (8 * i)));
  return std::move(bytes);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, std::optional<DecoderMode> expected_mode) {
  if (bytes.size() < 4 + 2 + 8) throw FormatError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body)) throw ChecksumError("checkpoint checksum mismatch");

  Reader r(bytes.data(), body);
  r.take(4);
  const auto version = r.uint<std::uint16_t>();
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(Checkpoint::kVersion) + ")");
  }
  const auto meta_len = r.uint<std::uint32_t>();
  const auto* meta_bytes = r.take(meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(meta_bytes), meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  Checkpoint c;
  DecoderMode mode;
  bool critics = false;
  try {
    c.config = meta.at("config").get<TrainConfig>();
    mode = parse_mode(meta.at("decoder_mode").get<std::string>());
    critics = meta.at("critics").get<bool>();
    c.speaker_ids = meta.at("speakers").get<std::vector<std::string>>();
    c.speaker_groups = meta.at("groups").get<std::vector<std::string>>();
    c.step = meta.at("step").get<std::uint64_t>();
    c.generator_opt.step = meta.at("generator_adam_step").get<std::uint64_t>();
    c.critic_opt.step = meta.at("critic_adam_step").get<std::uint64_t>();
    c.batch_stream = meta.at("batch_stream").get<Rng::State>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  if (expected_mode && *expected_mode != mode) {
    throw VariantMismatchError(std::string("checkpoint holds a ") + to_string(mode) +
                               "-decoder model, expected " + to_string(*expected_mode));
  }
  if (decoder_mode(c.config.variant) != mode || uses_wgan(c.config.variant) != critics) {
    throw FormatError("checkpoint metadata is inconsistent with its variant");
  }
  if (c.speaker_ids.empty() || c.speaker_groups.size() != c.speaker_ids.size()) {
    throw FormatError("checkpoint speaker table is malformed");
  }
  c.generator_opt.options = c.config.adam;
  c.critic_opt.options = c.config.adam;
  c.model = ModelBundle<float>::create(c.config.arch, mode, c.speaker_ids.size(), critics, c.config.seed);

  std::map<std::string, std::vector<float>> blocks;
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto name_len = r.uint<std::uint32_t>();
    const auto* name = r.take(name_len);
    const auto n = r.uint<std::uint64_t>();
    if (n > body) throw FormatError("checkpoint block size out of range");
    const std::uint8_t* payload = r.take(4 * static_cast<std::size_t>(n));
    std::vector<float> values(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t u = 0;
      for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(payload[4 * i + k]) << (8 * k);
      values[i] = std::bit_cast<float>(u);
    }
    blocks.emplace(std::string(reinterpret_cast<const char*>(name), name_len), std::move(values));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint blocks");

  auto take_block = [&](const std::string& name) {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw FormatError("checkpoint lacks block '" + name + "'");
    std::vector<float> v = std::move(it->second);
    blocks.erase(it);
    return v;
  };
  for (const auto& nt : c.model.all_tensors()) {
    std::vector<float> v = take_block(nt.name);
    if (v.size() != nt.tensor->size()) throw FormatError("block '" + nt.name + "' has the wrong size");
    std::copy(v.begin(), v.end(), nt.tensor->values().begin());
  }
  auto take_adam = [&](const std::string& prefix, AdamState<float>& s) {
    for (std::size_t i = 0; blocks.count(prefix + ".m." + std::to_string(i)); ++i) {
      s.m.push_back(take_block(prefix + ".m." + std::to_string(i)));
      s.v.push_back(take_block(prefix + ".v." + std::to_string(i)));
    }
  };
  take_adam("adam.generator", c.generator_opt);
  take_adam("adam.critic", c.critic_opt);
  for (float v : take_block("stats.mean")) c.stats.mean.push_back(v);
  for (float v : take_block("stats.stddev")) c.stats.stddev.push_back(v);
  if (!blocks.empty()) throw FormatError("unexpected checkpoint block '" + blocks.begin()->first + "'");
  return c;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load(const std::filesystem::path& path, std::optional<DecoderMode> expected_mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, expected_mode);
}

}  // namespace cyclevc
