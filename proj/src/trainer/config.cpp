// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "cyclevc/trainer/trainer.hpp"

namespace cyclevc {
namespace {

struct VariantInfo {
  Variant variant;
  const char* name;
  bool wgan;
  bool cycle;
  DecoderMode mode;
};

constexpr VariantInfo kVariants[] = {
    {Variant::vae, "vae", false, false, DecoderMode::shared},
    {Variant::vaewgan, "vaewgan", true, false, DecoderMode::shared},
    {Variant::cyclevae_single, "cyclevae-single", false, true, DecoderMode::shared},
    {Variant::cyclevaewgan_single, "cyclevaewgan-single", true, true, DecoderMode::shared},
    {Variant::cyclevae_multi, "cyclevae-multi", false, true, DecoderMode::multi},
    {Variant::cyclevaewgan_multi, "cyclevaewgan-multi", true, true, DecoderMode::multi},
};

const VariantInfo& info(Variant v) {
  for (const auto& i : kVariants) {
    if (i.variant == v) return i;
  }
  throw ConfigError("invalid variant");
}

const std::vector<std::string>& arch_keys() {
  static const std::vector<std::string> keys = {"feature_dim", "hidden",        "latent",        "kernel",
                                                "encoder_blocks", "decoder_blocks", "critic_blocks", "batch_norm"};
  return keys;
}

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

const char* to_string(Variant v) { return info(v).name; }

Variant parse_variant(std::string_view name) {
  for (const auto& i : kVariants) {
    if (name == i.name) return i.variant;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = [] {
    std::vector<Variant> out;
    for (const auto& i : kVariants) out.push_back(i.variant);
    return out;
  }();
  return v;
}

bool uses_wgan(Variant v) { return info(v).wgan; }
bool uses_cycle(Variant v) { return info(v).cycle; }
DecoderMode decoder_mode(Variant v) { return info(v).mode; }

LossWeights default_weights(Variant v) {
  return {uses_wgan(v) ? 1.0 : 0.0, uses_cycle(v) ? 1.0 : 0.0};
}

LossWeights TrainConfig::weights() const {
  const LossWeights preset = default_weights(variant);
  return {lambda_wgan.value_or(preset.wgan), lambda_cycle.value_or(preset.cycle)};
}

std::size_t TrainConfig::stage2() const {
  if (stage2_steps) return *stage2_steps;
  return uses_wgan(variant) ? 2000 : 0;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (crop_frames < 1) throw ConfigError("crop_frames must be at least 1");
  if (!uses_wgan(variant) && stage2() != 0) {
    throw ConfigError(std::string("variant ") + to_string(variant) + " has no adversarial stage; stage2_steps must be 0");
  }
  if (uses_wgan(variant) && stage2() > 0 && critic_steps < 1) throw ConfigError("critic_steps must be at least 1");
  if (!(clip_c > 0.0) || !std::isfinite(clip_c)) throw ConfigError("clip_c must be positive");
  weights().validate();
  if (!uses_wgan(variant) && weights().wgan != 0.0) {
    throw ConfigError(std::string("variant ") + to_string(variant) + " has no critics; lambda_wgan must be 0");
  }
  if (!uses_cycle(variant) && weights().cycle != 0.0) {
    throw ConfigError(std::string("variant ") + to_string(variant) + " has no cycle path; lambda_cycle must be 0");
  }
  if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("learning rate must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (arch.feature_dim != kFeatureDim) throw ConfigError("feature_dim must be 36");
  if (arch.hidden < 1 || arch.latent < 1 || arch.kernel < 1 || arch.kernel % 2 == 0) {
    throw ConfigError("hidden and latent sizes must be positive and the kernel odd");
  }
  if (arch.encoder_blocks < 1 || arch.decoder_blocks < 1 || arch.critic_blocks < 1) {
    throw ConfigError("every network needs at least one block");
  }
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (speakers[i] == speakers[k]) throw ConfigError("speaker '" + speakers[i] + "' listed twice");
    }
  }
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "variant",      "lambda_wgan", "lambda_cycle", "batch_size", "crop_frames", "stage1_steps",
      "stage2_steps", "critic_steps", "clip_c",     "lr",         "beta1",       "beta2",
      "eps",          "seed",        "speakers",     "arch"};
  return keys;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json::object();
  j["variant"] = to_string(c.variant);
  if (c.lambda_wgan) j["lambda_wgan"] = *c.lambda_wgan;
  if (c.lambda_cycle) j["lambda_cycle"] = *c.lambda_cycle;
  j["batch_size"] = c.batch_size;
  j["crop_frames"] = c.crop_frames;
  j["stage1_steps"] = c.stage1_steps;
  if (c.stage2_steps) j["stage2_steps"] = *c.stage2_steps;
  j["critic_steps"] = c.critic_steps;
  j["clip_c"] = c.clip_c;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["seed"] = c.seed;
  j["speakers"] = c.speakers;
  j["arch"] = {{"feature_dim", c.arch.feature_dim},       {"hidden", c.arch.hidden},
               {"latent", c.arch.latent},                 {"kernel", c.arch.kernel},
               {"encoder_blocks", c.arch.encoder_blocks}, {"decoder_blocks", c.arch.decoder_blocks},
               {"critic_blocks", c.arch.critic_blocks},   {"batch_norm", c.arch.batch_norm}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown(j, train_config_keys(), "training config");
  if (j.contains("variant")) {
    std::string v;
    read(j, "variant", v);
    c.variant = parse_variant(v);
  }
  if (j.contains("lambda_wgan")) {
    double v = 0.0;
    read(j, "lambda_wgan", v);
    c.lambda_wgan = v;
  }
  if (j.contains("lambda_cycle")) {
    double v = 0.0;
    read(j, "lambda_cycle", v);
    c.lambda_cycle = v;
  }
  read(j, "batch_size", c.batch_size);
  read(j, "crop_frames", c.crop_frames);
  read(j, "stage1_steps", c.stage1_steps);
  if (j.contains("stage2_steps")) {
    std::size_t v = 0;
    read(j, "stage2_steps", v);
    c.stage2_steps = v;
  }
  read(j, "critic_steps", c.critic_steps);
  read(j, "clip_c", c.clip_c);
  read(j, "lr", c.adam.lr);
  read(j, "beta1", c.adam.beta1);
  read(j, "beta2", c.adam.beta2);
  read(j, "eps", c.adam.eps);
  read(j, "seed", c.seed);
  read(j, "speakers", c.speakers);
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    reject_unknown(a, arch_keys(), "arch");
    read(a, "feature_dim", c.arch.feature_dim);
    read(a, "hidden", c.arch.hidden);
    read(a, "latent", c.arch.latent);
    read(a, "kernel", c.arch.kernel);
    read(a, "encoder_blocks", c.arch.encoder_blocks);
    read(a, "decoder_blocks", c.arch.decoder_blocks);
    read(a, "critic_blocks", c.arch.critic_blocks);
    read(a, "batch_norm", c.arch.batch_norm);
  }
}

void LossTrace::write_csv(std::ostream& out, bool with_wall_clock) const {
  out << "step,stage,source,total,kl,recon,cycle_kl,cycle_recon,wgan,critic";
  if (with_wall_clock) out << ",wall_ms";
  out << "\n";
  char buf[512];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%llu,%d,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                  static_cast<unsigned long long>(e.step), e.stage, e.source, e.total, e.kl, e.recon, e.cycle_kl,
                  e.cycle_recon, e.wgan, e.critic);
    out << buf;
    if (with_wall_clock) {
      std::snprintf(buf, sizeof(buf), ",%.3f", e.wall_ms);
      out << buf;
    }
    out << "\n";
  }
}

std::string LossTrace::csv(bool with_wall_clock) const {
  std::ostringstream out;
  write_csv(out, with_wall_clock);
  return out.str();
}

}  // namespace cyclevc
