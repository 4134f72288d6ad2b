// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cyclevc/diffcore/tensor.hpp"

namespace cyclevc {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape<T>& tape() const { return *tape_; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  T item() const { return value().item(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records the forward computation of one step; backward() replays it in
/// reverse. A tape is single-use: after backward() it accepts nothing more.
///
/// Node values live in a deque, so references returned by value() remain
/// valid while further nodes are recorded.
template <typename T>
class Tape {
 public:
  // Receives the upstream gradient of the node's output and accumulates into
  // the gradients of its inputs via Tape::grad().
  using BackwardFn = std::function<void(Tape&, std::span<const T> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);

  // Leaf bound to a trainable tensor. Repeated calls for the same tensor
  // return the same node, so fan-out accumulates naturally. Frozen or
  // non-requires-grad tensors are recorded as constants.
  Var<T> parameter(Tensor<T>& param);

  void freeze(const Tensor<T>& param) { frozen_.insert(&param); }

  // Records an operation output. `backward` may be empty for
  // non-differentiable results. Throws NumericError on non-finite values.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward,
                std::string_view op);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  // Gradient buffer of a node, zero-initialised on first access. Empty when
  // the node does not lead to any trainable tensor.
  std::span<T> grad(std::size_t id);

  void backward(Var<T> loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor<T>* param = nullptr;
    bool needs_grad = false;
    std::vector<T> grad;
    std::string_view op;
  };

  void check_open() const;

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> param_ids_;
  std::unordered_set<const Tensor<T>*> frozen_;
  bool consumed_ = false;
};

}  // namespace cyclevc
