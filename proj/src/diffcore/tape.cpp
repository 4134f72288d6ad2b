// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/diffcore/tape.hpp"

#include <string>

namespace cyclevc {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
void Tape<T>::check_open() const {
  if (consumed_) throw TapeError("tape already consumed by backward()");
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  check_open();
  if (!value.all_finite()) throw NumericError("non-finite constant recorded on tape");
  Node node;
  value.set_requires_grad(false);
  node.value = std::move(value);
  node.op = "constant";
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Tensor<T>& param) {
  check_open();
  if (auto it = param_ids_.find(&param); it != param_ids_.end()) return Var<T>(this, it->second);
  if (!param.requires_grad() || frozen_.count(&param)) {
    Var<T> v = constant(Tensor<T>(param.shape(), std::vector<T>(param.values().begin(), param.values().end())));
    param_ids_.emplace(&param, v.id());
    return v;
  }
  Node node;
  node.value = Tensor<T>(param.shape(), std::vector<T>(param.values().begin(), param.values().end()));
  node.param = &param;
  node.needs_grad = true;
  node.op = "parameter";
  nodes_.push_back(std::move(node));
  param_ids_.emplace(&param, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward,
                       std::string_view op) {
  check_open();
  if (!value.all_finite()) {
    throw NumericError("non-finite output from " + std::string(op) + " " + shape_string(value.shape()));
  }
  Node node;
  node.value = std::move(value);
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw TapeError("input id out of range in " + std::string(op));
    node.needs_grad = node.needs_grad || nodes_[in].needs_grad;
  }
  node.inputs = std::move(inputs);
  if (node.needs_grad) node.backward = std::move(backward);
  node.op = op;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
std::span<T> Tape<T>::grad(std::size_t id) {
  Node& node = nodes_.at(id);
  if (!node.needs_grad) return {};
  if (node.grad.empty()) node.grad.assign(node.value.size(), T(0));
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  check_open();
  if (loss.valid() && &loss.tape() != this) throw TapeError("loss belongs to a different tape");
  if (value(loss.id()).size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_string(value(loss.id()).shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss.id())[0] = T(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.empty()) continue;
    for (const T g : node.grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient at " + std::string(node.op));
    }
    if (node.param) {
      auto dst = node.param->grad();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cyclevc
