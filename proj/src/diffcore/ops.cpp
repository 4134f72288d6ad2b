// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/diffcore/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <string>

namespace cyclevc {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

const char* op_name(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::add: return "add";
    case ElementwiseOp::sub: return "sub";
    case ElementwiseOp::mul: return "mul";
    case ElementwiseOp::exp: return "exp";
    case ElementwiseOp::log: return "log";
    case ElementwiseOp::sigmoid: return "sigmoid";
    case ElementwiseOp::square: return "square";
    case ElementwiseOp::negate: return "negate";
  }
  return "?";
}

bool is_binary(ElementwiseOp op) {
  return op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul;
}

template <typename T>
void check_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) throw TapeError(std::string(op) + ": operands on different tapes");
}

template <typename T>
Var<T> binary(ElementwiseOp op, Var<T> a, Var<T> b) {
  const char* name = op_name(op);
  check_same_tape(a, b, name);
  Tape<T>& tape = a.tape();
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();

  // 0: same shape, 1: b broadcasts, 2: a broadcasts.
  int mode;
  if (av.shape() == bv.shape()) {
    mode = 0;
  } else if (bv.size() == 1) {
    mode = 1;
  } else if (av.size() == 1) {
    mode = 2;
  } else {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  const Shape out_shape = mode == 2 ? bv.shape() : av.shape();
  const std::size_t n = shape_size(out_shape);
  Tensor<T> out(out_shape);
  auto at_a = [&](std::size_t i) { return mode == 2 ? av[0] : av[i]; };
  auto at_b = [&](std::size_t i) { return mode == 1 ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case ElementwiseOp::add: out[i] = at_a(i) + at_b(i); break;
      case ElementwiseOp::sub: out[i] = at_a(i) - at_b(i); break;
      default: out[i] = at_a(i) * at_b(i); break;
    }
  }

  const std::size_t ia = a.id(), ib = b.id();
  auto backward = [op, mode, ia, ib, n](Tape<T>& t, std::span<const T> g) {
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    auto ga = t.grad(ia);
    auto gb = t.grad(ib);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pa = mode == 2 ? 0 : i;
      const std::size_t pb = mode == 1 ? 0 : i;
      T da, db;
      switch (op) {
        case ElementwiseOp::add: da = g[i]; db = g[i]; break;
        case ElementwiseOp::sub: da = g[i]; db = -g[i]; break;
        default: da = g[i] * bv[pb]; db = g[i] * av[pa]; break;
      }
      if (!ga.empty()) ga[pa] += da;
      if (!gb.empty()) gb[pb] += db;
    }
  };
  return tape.record(std::move(out), {ia, ib}, backward, name);
}

template <typename T>
Var<T> unary(ElementwiseOp op, Var<T> a) {
  const char* name = op_name(op);
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T x = av[i];
    switch (op) {
      case ElementwiseOp::exp: out[i] = std::exp(x); break;
      case ElementwiseOp::log:
        if (!(x > T(0))) throw DomainError("log of non-positive value " + std::to_string(x));
        out[i] = std::log(x);
        break;
      case ElementwiseOp::sigmoid: out[i] = stable_sigmoid(x); break;
      case ElementwiseOp::square: out[i] = x * x; break;
      default: out[i] = -x; break;
    }
  }
  const std::size_t ia = a.id();
  auto backward = [op, ia](Tape<T>& t, std::span<const T> g) {
    const Tensor<T>& av = t.value(ia);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = av[i];
      switch (op) {
        case ElementwiseOp::exp: ga[i] += g[i] * std::exp(x); break;
        case ElementwiseOp::log: ga[i] += g[i] / x; break;
        case ElementwiseOp::sigmoid: {
          const T s = stable_sigmoid(x);
          ga[i] += g[i] * s * (T(1) - s);
          break;
        }
        case ElementwiseOp::square: ga[i] += g[i] * T(2) * x; break;
        default: ga[i] -= g[i]; break;
      }
    }
  };
  return a.tape().record(std::move(out), {ia}, backward, name);
}

std::size_t product(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

}  // namespace

template <typename T>
Var<T> elementwise(ElementwiseOp op, Var<T> a, std::optional<Var<T>> b) {
  if (is_binary(op)) {
    if (!b) throw ShapeError(std::string(op_name(op)) + " needs two operands");
    return binary(op, a, *b);
  }
  if (b) throw ShapeError(std::string(op_name(op)) + " takes one operand");
  return unary(op, a);
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  const std::size_t ia = a.id();
  auto backward = [ia, factor](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  };
  return a.tape().record(std::move(out), {ia}, backward, "scale");
}

template <typename T>
Var<T> reduce(ReduceOp op, Var<T> a, std::vector<std::size_t> axes, bool keepdims) {
  const Tensor<T>& av = a.value();
  const Shape& in = av.shape();
  const std::size_t r = in.size();
  std::vector<bool> reduced(r, axes.empty());
  for (std::size_t ax : axes) {
    if (ax >= r) {
      throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " + shape_string(in));
    }
    reduced[ax] = true;
  }

  Shape kept(r);
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < r; ++i) {
    kept[i] = reduced[i] ? 1 : in[i];
    if (reduced[i]) count *= in[i];
    if (!reduced[i] || keepdims) out_shape.push_back(kept[i]);
  }

  // Output offset of every input element.
  auto index_map = std::make_shared<std::vector<std::size_t>>(av.size());
  {
    std::vector<std::size_t> out_stride(r, 0);
    std::size_t s = 1;
    for (std::size_t i = r; i-- > 0;) {
      out_stride[i] = reduced[i] ? 0 : s;
      s *= kept[i];
    }
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t flat = 0; flat < av.size(); ++flat) {
      (*index_map)[flat] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += out_stride[d];
        if (idx[d] < in[d]) break;
        off -= out_stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }

  Tensor<T> out(out_shape);
  for (std::size_t i = 0; i < av.size(); ++i) out[(*index_map)[i]] += av[i];
  const T factor = op == ReduceOp::mean ? T(1) / static_cast<T>(count) : T(1);
  if (op == ReduceOp::mean) {
    for (auto& v : out.values()) v *= factor;
  }

  const std::size_t ia = a.id();
  auto backward = [ia, index_map, factor](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[(*index_map)[i]] * factor;
  };
  return a.tape().record(std::move(out), {ia}, backward, op == ReduceOp::sum ? "sum" : "mean");
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_tape(a, b, "matmul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_string(av.shape()) + " by " + shape_string(bv.shape()));
  }
  const auto m = static_cast<Eigen::Index>(av.dim(0));
  const auto k = static_cast<Eigen::Index>(av.dim(1));
  const auto n = static_cast<Eigen::Index>(bv.dim(1));
  Tensor<T> out({av.dim(0), bv.dim(1)});
  MatrixMap<T>(out.data(), m, n).noalias() = ConstMatrixMap<T>(av.data(), m, k) * ConstMatrixMap<T>(bv.data(), k, n);

  const std::size_t ia = a.id(), ib = b.id();
  auto backward = [ia, ib, m, k, n](Tape<T>& t, std::span<const T> g) {
    ConstMatrixMap<T> gm(g.data(), m, n);
    auto ga = t.grad(ia);
    auto gb = t.grad(ib);
    if (!ga.empty()) {
      MatrixMap<T>(ga.data(), m, k).noalias() += gm * ConstMatrixMap<T>(t.value(ib).data(), k, n).transpose();
    }
    if (!gb.empty()) {
      MatrixMap<T>(gb.data(), k, n).noalias() += ConstMatrixMap<T>(t.value(ia).data(), m, k).transpose() * gm;
    }
  };
  return a.tape().record(std::move(out), {ia, ib}, backward, "matmul");
}

template <typename T>
Var<T> conv1d(Var<T> input, Var<T> weights, std::optional<Var<T>> bias, std::size_t stride,
              std::size_t padding) {
  check_same_tape(input, weights, "conv1d");
  const Tensor<T>& xv = input.value();
  const Tensor<T>& wv = weights.value();
  if (xv.rank() != 3 || wv.rank() != 3) {
    throw ShapeError("conv1d: expected input [batch,ch,T] and weights [out,in,k], got " +
                     shape_string(xv.shape()) + " and " + shape_string(wv.shape()));
  }
  if (stride == 0) throw DomainError("conv1d: stride must be >= 1");
  const std::size_t batch = xv.dim(0), in_ch = xv.dim(1), len = xv.dim(2);
  const std::size_t out_ch = wv.dim(0), kernel = wv.dim(2);
  if (wv.dim(1) != in_ch) {
    throw ShapeError("conv1d: weights expect " + std::to_string(wv.dim(1)) + " input channels, got " +
                     std::to_string(in_ch));
  }
  if (kernel > len + 2 * padding) {
    throw ShapeError("conv1d: kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(len + 2 * padding));
  }
  if (bias) {
    check_same_tape(input, *bias, "conv1d");
    if (bias->value().size() != out_ch) throw ShapeError("conv1d: bias size must equal out channels");
  }
  const std::size_t out_len = (len + 2 * padding - kernel) / stride + 1;
  const std::size_t rows = in_ch * kernel;
  const std::size_t cols = batch * out_len;

  auto unfolded = std::make_shared<RowMatrix<T>>(rows, cols);
  RowMatrix<T>& u = *unfolded;
  for (std::size_t c = 0; c < in_ch; ++c) {
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = u.data() + (c * kernel + k) * cols;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = xv.data() + (b * in_ch + c) * len;
        for (std::size_t t = 0; t < out_len; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
          row[b * out_len + t] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) ? src[pos] : T(0);
        }
      }
    }
  }

  RowMatrix<T> product = ConstMatrixMap<T>(wv.data(), out_ch, rows) * u;
  Tensor<T> out({batch, out_ch, out_len});
  const T* bias_values = bias ? bias->value().data() : nullptr;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_ch; ++o) {
      const T* src = product.data() + o * cols + b * out_len;
      T* dst = out.data() + (b * out_ch + o) * out_len;
      const T shift = bias_values ? bias_values[o] : T(0);
      for (std::size_t t = 0; t < out_len; ++t) dst[t] = src[t] + shift;
    }
  }

  const std::size_t ix = input.id(), iw = weights.id();
  const std::optional<std::size_t> ibias = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  std::vector<std::size_t> inputs{ix, iw};
  if (ibias) inputs.push_back(*ibias);

  auto backward = [=](Tape<T>& t, std::span<const T> g) {
    RowMatrix<T> gy(out_ch, cols);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        const T* src = g.data() + (b * out_ch + o) * out_len;
        std::copy(src, src + out_len, gy.data() + o * cols + b * out_len);
      }
    }
    if (ibias) {
      auto gbias = t.grad(*ibias);
      if (!gbias.empty()) {
        for (std::size_t o = 0; o < out_ch; ++o) gbias[o] += gy.row(static_cast<Eigen::Index>(o)).sum();
      }
    }
    auto gw = t.grad(iw);
    if (!gw.empty()) MatrixMap<T>(gw.data(), out_ch, rows).noalias() += gy * unfolded->transpose();
    auto gx = t.grad(ix);
    if (!gx.empty()) {
      RowMatrix<T> gu = ConstMatrixMap<T>(t.value(iw).data(), out_ch, rows).transpose() * gy;
      for (std::size_t c = 0; c < in_ch; ++c) {
        for (std::size_t k = 0; k < kernel; ++k) {
          const T* row = gu.data() + (c * kernel + k) * cols;
          for (std::size_t b = 0; b < batch; ++b) {
            T* dst = gx.data() + (b * in_ch + c) * len;
            for (std::size_t tt = 0; tt < out_len; ++tt) {
              const std::ptrdiff_t pos =
                  static_cast<std::ptrdiff_t>(tt * stride + k) - static_cast<std::ptrdiff_t>(padding);
              if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[pos] += row[b * out_len + tt];
            }
          }
        }
      }
    }
  };
  return input.tape().record(std::move(out), std::move(inputs), backward, "conv1d");
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor<T>& av = a.value();
  const Shape& in = av.shape();
  if (axis >= in.size() || begin >= end || end > in[axis]) {
    throw ShapeError("slice: invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_string(in));
  }
  const std::size_t outer = product(in, 0, axis);
  const std::size_t inner = product(in, axis + 1, in.size());
  const std::size_t mid = in[axis];
  const std::size_t width = end - begin;
  Shape out_shape = in;
  out_shape[axis] = width;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = av.data() + (o * mid + begin) * inner;
    std::copy(src, src + width * inner, out.data() + o * width * inner);
  }
  const std::size_t ia = a.id();
  auto backward = [=](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = ga.data() + (o * mid + begin) * inner;
      const T* src = g.data() + o * width * inner;
      for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
    }
  };
  return a.tape().record(std::move(out), {ia}, backward, "slice");
}

template <typename T>
Var<T> concat(Var<T> a, Var<T> b, std::size_t axis) {
  check_same_tape(a, b, "concat");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sa.size() == sb.size() && axis < sa.size();
  for (std::size_t i = 0; ok && i < sa.size(); ++i) ok = i == axis || sa[i] == sb[i];
  if (!ok) throw ShapeError("concat: incompatible " + shape_string(sa) + " and " + shape_string(sb));
  const std::size_t outer = product(sa, 0, axis);
  const std::size_t inner = product(sa, axis + 1, sa.size());
  const std::size_t wa = sa[axis] * inner, wb = sb[axis] * inner;
  Shape out_shape = sa;
  out_shape[axis] = sa[axis] + sb[axis];
  Tensor<T> out(out_shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* dst = out.data() + o * (wa + wb);
    std::copy(pa + o * wa, pa + (o + 1) * wa, dst);
    std::copy(pb + o * wb, pb + (o + 1) * wb, dst + wa);
  }
  const std::size_t ia = a.id(), ib = b.id();
  auto backward = [=](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    auto gb = t.grad(ib);
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = g.data() + o * (wa + wb);
      if (!ga.empty()) {
        for (std::size_t i = 0; i < wa; ++i) ga[o * wa + i] += src[i];
      }
      if (!gb.empty()) {
        for (std::size_t i = 0; i < wb; ++i) gb[o * wb + i] += src[wa + i];
      }
    }
  };
  return a.tape().record(std::move(out), {ia, ib}, backward, "concat");
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  const Tensor<T>& av = a.value();
  if (shape_size(shape) != av.size()) {
    throw ShapeError("reshape: " + shape_string(av.shape()) + " to " + shape_string(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(av.values().begin(), av.values().end()));
  const std::size_t ia = a.id();
  auto backward = [ia](Tape<T>& t, std::span<const T> g) {
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return a.tape().record(std::move(out), {ia}, backward, "reshape");
}

#define CYCLEVC_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> elementwise<T>(ElementwiseOp, Var<T>, std::optional<Var<T>>);                   \
  template Var<T> scale<T>(Var<T>, T);                                                              \
  template Var<T> reduce<T>(ReduceOp, Var<T>, std::vector<std::size_t>, bool);                      \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                        \
  template Var<T> conv1d<T>(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t);      \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t, std::size_t);                         \
  template Var<T> concat<T>(Var<T>, Var<T>, std::size_t);                                           \
  template Var<T> reshape<T>(Var<T>, Shape);

CYCLEVC_INSTANTIATE_OPS(float)
CYCLEVC_INSTANTIATE_OPS(double)

}  // namespace cyclevc
