// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/diffcore/adam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cyclevc {

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const Tensor<T>* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& p = *params[i];
    if (state.m[i].size() != p.size() || state.v[i].size() != p.size()) {
      throw ShapeError("adam_step: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                       shape_string(p.shape()));
    }
    for (const T g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(i));
    }
  }

  state.step += 1;
  const AdamOptions& o = state.options;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(o.beta1);
  const T b2 = static_cast<T>(o.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(o.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(o.beta2, t));
  const T lr = static_cast<T>(o.lr);
  const T eps = static_cast<T>(o.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i]->values();
    auto grads = params[i]->grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const T g = grads[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const T m_hat = m[k] / correction1;
      const T v_hat = v[k] / correction2;
      values[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void clip_weights(std::span<Tensor<T>* const> params, T c) {
  if (!(c > T(0))) throw DomainError("clip_weights: c must be positive");
  for (Tensor<T>* p : params) {
    for (T& v : p->values()) v = std::clamp(v, -c, c);
  }
}

template void adam_step<float>(std::span<Tensor<float>* const>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>* const>, AdamState<double>&);
template void clip_weights<float>(std::span<Tensor<float>* const>, float);
template void clip_weights<double>(std::span<Tensor<double>* const>, double);

}  // namespace cyclevc
