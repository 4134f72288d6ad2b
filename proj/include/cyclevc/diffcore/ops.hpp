// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cyclevc/diffcore/tape.hpp"

namespace cyclevc {

enum class ElementwiseOp { add, sub, mul, exp, log, sigmoid, square, negate };
enum class ReduceOp { sum, mean };

// Binary kinds need `b`; a binary operand of a single element broadcasts.
template <typename T>
Var<T> elementwise(ElementwiseOp op, Var<T> a, std::optional<Var<T>> b = std::nullopt);

template <typename T>
Var<T> add(Var<T> a, Var<T> b) { return elementwise<T>(ElementwiseOp::add, a, b); }
template <typename T>
Var<T> sub(Var<T> a, Var<T> b) { return elementwise<T>(ElementwiseOp::sub, a, b); }
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) { return elementwise<T>(ElementwiseOp::mul, a, b); }
template <typename T>
Var<T> exp(Var<T> a) { return elementwise(ElementwiseOp::exp, a); }
template <typename T>
Var<T> log(Var<T> a) { return elementwise(ElementwiseOp::log, a); }
template <typename T>
Var<T> sigmoid(Var<T> a) { return elementwise(ElementwiseOp::sigmoid, a); }
template <typename T>
Var<T> square(Var<T> a) { return elementwise(ElementwiseOp::square, a); }
template <typename T>
Var<T> negate(Var<T> a) { return elementwise(ElementwiseOp::negate, a); }

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }
template <typename T>
Var<T> operator-(Var<T> a) { return negate(a); }

// Multiplication by a constant.
template <typename T>
Var<T> scale(Var<T> a, T factor);

// Reduces over `axes` (all axes when empty). Reduced axes are dropped unless
// keepdims is set; a full reduction yields a rank-0 scalar.
template <typename T>
Var<T> reduce(ReduceOp op, Var<T> a, std::vector<std::size_t> axes = {}, bool keepdims = false);

template <typename T>
Var<T> sum(Var<T> a, std::vector<std::size_t> axes = {}, bool keepdims = false) {
  return reduce(ReduceOp::sum, a, std::move(axes), keepdims);
}
template <typename T>
Var<T> mean(Var<T> a, std::vector<std::size_t> axes = {}, bool keepdims = false) {
  return reduce(ReduceOp::mean, a, std::move(axes), keepdims);
}

// [m, k] x [k, n] -> [m, n].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

/// 1-D cross-correlation over time:
///   out[b, o, t] = bias[o] + sum_{c,k} w[o, c, k] * x[b, c, t*stride + k - padding]
/// input [batch, in_ch, T], weights [out_ch, in_ch, K], bias [out_ch] (optional).
/// Output length is floor((T + 2*padding - K) / stride) + 1.
template <typename T>
Var<T> conv1d(Var<T> input, Var<T> weights, std::optional<Var<T>> bias, std::size_t stride = 1,
              std::size_t padding = 0);

// Half-open range [begin, end) along one axis.
template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end);

template <typename T>
Var<T> concat(Var<T> a, Var<T> b, std::size_t axis);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

}  // namespace cyclevc
