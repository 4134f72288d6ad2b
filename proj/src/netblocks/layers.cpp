// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/netblocks/layers.hpp"

#include <cmath>
#include <memory>

namespace cyclevc {

template <typename T>
std::vector<Tensor<T>*> trainable_tensors(const TensorList<T>& list) {
  std::vector<Tensor<T>*> out;
  for (const auto& nt : list) {
    if (nt.trainable) out.push_back(nt.tensor);
  }
  return out;
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>& running_mean, Tensor<T>& running_var,
                  T eps, T momentum, PassMode mode) {
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("batch_norm: expected [batch, channels, T], got " + shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), len = xv.dim(2);
  if (gamma.value().size() != channels || beta.value().size() != channels || running_mean.size() != channels ||
      running_var.size() != channels) {
    throw ShapeError("batch_norm: parameter size does not match " + std::to_string(channels) + " channels");
  }
  const std::size_t count = batch * len;
  const T* g = gamma.value().data();
  const T* b = beta.value().data();

  auto normalized = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(channels);
  Tensor<T> out(xv.shape());

  for (std::size_t c = 0; c < channels; ++c) {
    T mu, var;
    if (mode.training) {
      T acc = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* row = xv.data() + (n * channels + c) * len;
        for (std::size_t t = 0; t < len; ++t) acc += row[t];
      }
      mu = acc / static_cast<T>(count);
      T sq = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* row = xv.data() + (n * channels + c) * len;
        for (std::size_t t = 0; t < len; ++t) sq += (row[t] - mu) * (row[t] - mu);
      }
      var = sq / static_cast<T>(count);
      if (mode.update_stats) {
        const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mu;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
      }
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const T xh = (xv[base + t] - mu) * is;
        (*normalized)[base + t] = xh;
        out[base + t] = g[c] * xh + b[c];
      }
    }
  }

  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool training = mode.training;
  auto backward = [=](Tape<T>& tape, std::span<const T> dy) {
    auto gx = tape.grad(ix);
    auto gg = tape.grad(ig);
    auto gb = tape.grad(ib);
    const T* gam = tape.value(ig).data();
    const std::vector<T>& xh = *normalized;
    for (std::size_t c = 0; c < channels; ++c) {
      T sum_dy = 0, sum_dy_xh = 0;
      for (std::size_t n = 0; n < batch; ++n) {
        const std::size_t base = (n * channels + c) * len;
        for (std::size_t t = 0; t < len; ++t) {
          sum_dy += dy[base + t];
          sum_dy_xh += dy[base + t] * xh[base + t];
        }
      }
      if (!gb.empty()) gb[c] += sum_dy;
      if (!gg.empty()) gg[c] += sum_dy_xh;
      if (gx.empty()) continue;
      const T is = (*inv_std)[c];
      if (training) {
        // d xhat = dy * gamma; sums below are over the channel's batch.
        const T inv_n = T(1) / static_cast<T>(count);
        for (std::size_t n = 0; n < batch; ++n) {
          const std::size_t base = (n * channels + c) * len;
          for (std::size_t t = 0; t < len; ++t) {
            gx[base + t] += gam[c] * is * (dy[base + t] - inv_n * sum_dy - xh[base + t] * inv_n * sum_dy_xh);
          }
        }
      } else {
        for (std::size_t n = 0; n < batch; ++n) {
          const std::size_t base = (n * channels + c) * len;
          for (std::size_t t = 0; t < len; ++t) gx[base + t] += gam[c] * is * dy[base + t];
        }
      }
    }
  };
  return x.tape().record(std::move(out), {ix, ig, ib}, backward, "batch_norm");
}

template <typename T>
Conv1dLayer<T> Conv1dLayer<T>::make(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Rng& rng) {
  Conv1dLayer layer;
  layer.weight = Tensor<T>({out_ch, in_ch, kernel});
  layer.bias = Tensor<T>({out_ch});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel));
  for (auto& w : layer.weight.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  for (auto& w : layer.bias.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  layer.padding = (kernel - 1) / 2;
  return layer;
}

template <typename T>
Var<T> Conv1dLayer<T>::forward(Tape<T>& tape, Var<T> x) {
  return conv1d(x, tape.parameter(weight), std::optional<Var<T>>(tape.parameter(bias)), stride, padding);
}

template <typename T>
void Conv1dLayer<T>::collect(TensorList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, true});
}

template <typename T>
BatchNorm<T> BatchNorm<T>::make(std::size_t channels) {
  BatchNorm bn;
  bn.gamma = Tensor<T>({channels}, T(1));
  bn.beta = Tensor<T>({channels}, T(0));
  bn.running_mean = Tensor<T>({channels}, T(0));
  bn.running_var = Tensor<T>({channels}, T(1));
  bn.gamma.set_requires_grad(true);
  bn.beta.set_requires_grad(true);
  return bn;
}

template <typename T>
Var<T> BatchNorm<T>::forward(Tape<T>& tape, Var<T> x, PassMode mode) {
  return batch_norm(x, tape.parameter(gamma), tape.parameter(beta), running_mean, running_var, eps, momentum, mode);
}

template <typename T>
void BatchNorm<T>::collect(TensorList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", &gamma, true});
  out.push_back({prefix + ".beta", &beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, false});
  out.push_back({prefix + ".running_var", &running_var, false});
}

template <typename T>
Var<T> glu(Var<T> pre_activation) {
  const std::size_t width = pre_activation.dim(1);
  if (width % 2 != 0) throw ShapeError("glu: channel count must be even, got " + std::to_string(width));
  Var<T> value = slice(pre_activation, 1, 0, width / 2);
  Var<T> gate = slice(pre_activation, 1, width / 2, width);
  return mul(value, sigmoid(gate));
}

template <typename T>
GluBlock<T> GluBlock<T>::make(std::size_t in_ch, std::size_t channels, std::size_t kernel, bool batch_norm,
                              Rng& rng) {
  GluBlock block;
  block.conv = Conv1dLayer<T>::make(in_ch, 2 * channels, kernel, rng);
  if (batch_norm) block.norm = BatchNorm<T>::make(2 * channels);
  return block;
}

template <typename T>
Var<T> GluBlock<T>::forward(Tape<T>& tape, Var<T> x, PassMode mode) {
  if (x.dim(1) != conv.in_channels()) {
    throw ShapeError("glu block expects " + std::to_string(conv.in_channels()) + " input channels, got " +
                     std::to_string(x.dim(1)));
  }
  Var<T> h = conv.forward(tape, x);
  if (norm) h = norm->forward(tape, h, mode);
  return glu(h);
}

template <typename T>
void GluBlock<T>::collect(TensorList<T>& out, const std::string& prefix) {
  conv.collect(out, prefix + ".conv");
  if (norm) norm->collect(out, prefix + ".bn");
}

#define CYCLEVC_INSTANTIATE_LAYERS(T)                                                                   \
  template std::vector<Tensor<T>*> trainable_tensors<T>(const TensorList<T>&);                          \
  template Var<T> batch_norm<T>(Var<T>, Var<T>, Var<T>, Tensor<T>&, Tensor<T>&, T, T, PassMode);        \
  template Var<T> glu<T>(Var<T>);                                                                       \
  template struct Conv1dLayer<T>;                                                                       \
  template struct BatchNorm<T>;                                                                         \
  template struct GluBlock<T>;

CYCLEVC_INSTANTIATE_LAYERS(float)
CYCLEVC_INSTANTIATE_LAYERS(double)

}  // namespace cyclevc
