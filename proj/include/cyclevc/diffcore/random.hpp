// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>

#include "cyclevc/diffcore/tensor.hpp"

namespace cyclevc {

std::uint64_t splitmix64(std::uint64_t& state);

// FNV-1a of a tag, used to derive stream keys from readable names.
std::uint64_t tag_key(std::string_view tag);

/// xoshiro256** generator. Streams are derived from (seed, keys...) so that a
/// consumer's draws never depend on how many values other consumers drew.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  static Rng keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  // Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal();

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  State state_{};
};

/// Reparameterization noise for one training step. Each draw is addressed by a
/// key, so the same (seed, step, key) always yields the same tensor no matter
/// which loss assembles it or in which order.
template <typename T>
class NoiseSource {
 public:
  NoiseSource() = default;
  NoiseSource(std::uint64_t seed, std::uint64_t step) : seed_(seed), step_(step) {}

  Tensor<T> normal(const Shape& shape, std::uint64_t key) const {
    Rng rng = Rng::keyed(seed_, {step_, key});
    Tensor<T> out(shape);
    for (auto& v : out.values()) v = static_cast<T>(rng.normal());
    return out;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;
};

}  // namespace cyclevc
