// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cyclevc/diffcore/ops.hpp"
#include "cyclevc/diffcore/random.hpp"

namespace cyclevc {

// How a forward pass treats batch normalization.
struct PassMode {
  bool training = true;      // batch statistics (true) or running statistics (false)
  bool update_stats = true;  // fold batch statistics into the running estimates

  static PassMode train() { return {true, true}; }
  static PassMode train_frozen_stats() { return {true, false}; }
  static PassMode eval() { return {false, false}; }
};

// A tensor owned by a network, with the name it is serialized under.
// Buffers (running statistics) are not trainable.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool trainable = true;
};

template <typename T>
using TensorList = std::vector<NamedTensor<T>>;

template <typename T>
std::vector<Tensor<T>*> trainable_tensors(const TensorList<T>& list);

/// Batch normalization over [batch, channels, T] with per-channel statistics
/// taken across batch and time.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                  T eps, T momentum, PassMode mode);

template <typename T>
struct Conv1dLayer {
  Tensor<T> weight;  // [out, in, k]
  Tensor<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; "same" padding for odd k.
  static Conv1dLayer make(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  Var<T> forward(Tape<T>& tape, Var<T> x);
  void collect(TensorList<T>& out, const std::string& prefix);
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);

  static BatchNorm make(std::size_t channels);

  Var<T> forward(Tape<T>& tape, Var<T> x, PassMode mode);
  void collect(TensorList<T>& out, const std::string& prefix);
};

/// conv -> (batch norm) -> split channels into value half A and gate half B
/// -> A * sigmoid(B).
template <typename T>
struct GluBlock {
  Conv1dLayer<T> conv;  // produces 2 * channels
  std::optional<BatchNorm<T>> norm;

  static GluBlock make(std::size_t in_ch, std::size_t channels, std::size_t kernel, bool batch_norm, Rng& rng);

  std::size_t channels() const { return conv.out_channels() / 2; }

  Var<T> forward(Tape<T>& tape, Var<T> x, PassMode mode);
  void collect(TensorList<T>& out, const std::string& prefix);
};

// Gating of an already computed pre-activation [batch, 2C, T]; exposed for the
// block's contract tests.
template <typename T>
Var<T> glu(Var<T> pre_activation);

}  // namespace cyclevc
