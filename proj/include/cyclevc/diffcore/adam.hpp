// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cyclevc/diffcore/tensor.hpp"

namespace cyclevc {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for an ordered parameter list; the i-th buffer pair belongs
/// to the i-th parameter passed to adam_step.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// One Adam update with bias correction, reading each parameter's grad buffer.
// Throws ShapeError when the state was built for other shapes and
// NumericError on a non-finite gradient (parameters are left untouched).
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state);

// Clamps every value into [-c, c].
template <typename T>
void clip_weights(std::span<Tensor<T>* const> params, T c);

}  // namespace cyclevc
