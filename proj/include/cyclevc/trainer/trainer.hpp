// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cyclevc/corpus/corpus.hpp"
#include "cyclevc/diffcore/adam.hpp"
#include "cyclevc/losses/losses.hpp"
#include "cyclevc/metrics/metrics.hpp"
#include "cyclevc/netblocks/model.hpp"

namespace cyclevc {

enum class Variant { vae, vaewgan, cyclevae_single, cyclevaewgan_single, cyclevae_multi, cyclevaewgan_multi };

const char* to_string(Variant v);
Variant parse_variant(std::string_view name);  // ConfigError on unknown names
const std::vector<Variant>& all_variants();

bool uses_wgan(Variant v);
bool uses_cycle(Variant v);
DecoderMode decoder_mode(Variant v);
LossWeights default_weights(Variant v);

struct TrainConfig {
  Variant variant = Variant::cyclevae_multi;
  std::optional<double> lambda_wgan;   // preset of the variant when unset
  std::optional<double> lambda_cycle;  // preset of the variant when unset
  std::size_t batch_size = 8;
  std::size_t crop_frames = 128;
  std::size_t stage1_steps = 2000;
  std::optional<std::size_t> stage2_steps;  // 2000 for adversarial variants, else 0
  std::size_t critic_steps = 5;
  double clip_c = 0.01;
  AdamOptions adam;
  std::uint64_t seed = 1;
  std::vector<std::string> speakers;  // empty: every corpus speaker
  ArchConfig arch;

  LossWeights weights() const;
  std::size_t stage2() const;
  std::size_t total_steps() const { return stage1_steps + stage2(); }
  void validate() const;
};

// Unknown keys raise ConfigError.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
const std::vector<std::string>& train_config_keys();

/// One trace row per generator step. Critic-loss is the last critic step's
/// value during stage 2 and 0 otherwise.
struct TraceEntry {
  std::uint64_t step = 0;
  int stage = 1;
  std::size_t source = 0;
  double total = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  double cycle_kl = 0.0;
  double cycle_recon = 0.0;
  double wgan = 0.0;
  double critic = 0.0;
  double wall_ms = 0.0;
};

struct LossTrace {
  std::vector<TraceEntry> entries;

  // Wall-clock is the one column that is not reproducible; leave it out to
  // compare runs.
  void write_csv(std::ostream& out, bool with_wall_clock = true) const;
  std::string csv(bool with_wall_clock = true) const;
};

struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  TrainConfig config;
  std::vector<std::string> speaker_ids;
  std::vector<std::string> speaker_groups;
  ModelBundle<float> model;
  AdamState<float> generator_opt;
  AdamState<float> critic_opt;
  FeatureStats stats;
  std::uint64_t step = 0;
  Rng::State batch_stream{};

  std::size_t speaker_index(std::string_view id) const;  // UnknownSpeakerError
};

/// "VCK1", u16 version, u32-length JSON metadata, u32 block count, blocks of
/// (u32 name length, name, u64 count, count float32), u64 FNV-1a checksum of
/// everything before it. All integers little-endian.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes,
                       std::optional<DecoderMode> expected_mode = std::nullopt);
void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path, std::optional<DecoderMode> expected_mode = std::nullopt);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

// Model, optimizer and normalization state before the first step.
Checkpoint initial_checkpoint(const TrainConfig& config, const Corpus& corpus);

struct StepEvent {
  std::uint64_t step = 0;
  int stage = 1;
  bool critic_update = false;
  Checkpoint& state;
};

using StepObserver = std::function<void(const StepEvent&)>;

struct TrainResult {
  Checkpoint checkpoint;
  LossTrace trace;
};

/// Non-finite loss or gradient during training; carries the trace so far.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, LossTrace trace) : NumericError(what), trace_(std::move(trace)) {}
  const LossTrace& trace() const { return trace_; }

 private:
  LossTrace trace_;
};

// `corpus` holds features in their original scale; normalization statistics
// are computed from its training split and stored in the checkpoint.
TrainResult train(const TrainConfig& config, const Corpus& corpus, const StepObserver& observer = {});

// Posterior-mean conversion with batch norm in eval mode. Input and output are
// in the original feature scale.
FeatureSequence convert(Checkpoint& ckpt, const FeatureSequence& x, std::string_view source,
                        std::string_view target);
FeatureSequence cycle_convert(Checkpoint& ckpt, const FeatureSequence& x, std::string_view source,
                              std::string_view target);

struct EvaluationResult {
  std::vector<MetricRecord> records;          // pair rows for MCD and MSD
  std::vector<FeatureSequence> converted;     // every cross-speaker conversion
};

// Converts every eval utterance for every ordered speaker pair and scores it
// against the parallel reference.
EvaluationResult evaluate_checkpoint(Checkpoint& ckpt, const Corpus& corpus, const std::string& variant,
                                     std::uint64_t seed);

struct ExperimentOptions {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;  // variant, seed and lambdas are set per run
  std::size_t jobs = 1;
  std::function<void(const std::string&)> log;
  // Called once per finished run, never concurrently.
  std::function<void(Variant, std::uint64_t seed, TrainResult&)> on_trained;
};

struct ExperimentResult {
  std::vector<MetricRecord> records;  // including Average rows
  std::vector<SummaryRow> summary;
  std::map<std::string, GvProfile> gv;  // "reference" plus one entry per variant
};

ExperimentResult run_experiment(const ExperimentOptions& options, const Corpus& corpus);

}  // namespace cyclevc
