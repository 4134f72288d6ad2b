// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "cyclevc/diffcore/ops.hpp"
#include "cyclevc/netblocks/model.hpp"
#include "cyclevc/verify/verify.hpp"
#include "doctest.h"

using namespace cyclevc;

namespace {

ArchConfig tiny() {
  ArchConfig a;
  a.hidden = 4;
  a.latent = 4;
  a.kernel = 3;
  a.encoder_blocks = 2;
  a.decoder_blocks = 2;
  a.critic_blocks = 2;
  return a;
}

Tensor<double> random_input(Rng& rng, std::size_t batch, std::size_t ch, std::size_t frames, double lo = -1,
                            double hi = 1) {
  Tensor<double> t({batch, ch, frames});
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

void zero(Conv1dLayer<double>& layer) {
  for (auto& v : layer.weight.values()) v = 0.0;
  for (auto& v : layer.bias.values()) v = 0.0;
}

double glu_scalar(double a, double b) {
  Tape<double> tape;
  return glu(tape.constant(Tensor<double>({1, 2, 1}, std::vector<double>{a, b}))).item();
}

}  // namespace

TEST_CASE("glu gating") {
  CHECK(glu_scalar(2.0, 0.0) == 1.0);
  CHECK(std::abs(glu_scalar(3.5, 50.0) - 3.5) < 1e-9);
  CHECK(glu_scalar(1.0, std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  Tape<double> tape;
  CHECK_THROWS_AS(glu(tape.constant(Tensor<double>({1, 3, 2}))), ShapeError);
}

TEST_CASE("encoder with zeroed heads returns the noise itself") {
  Rng rng(1);
  auto m = ModelBundle<double>::create(tiny(), DecoderMode::multi, 2, false, 3);
  zero(m.encoder.mean_head);
  zero(m.encoder.log_var_head);
  Tape<double> tape;
  const NoiseSource<double> noise(5, 0);
  auto code = m.encode(tape, tape.constant(random_input(rng, 2, 36, 16)), PassMode::train(), &noise, 9);
  const Tensor<double> eps = noise.normal(code.mean.shape(), 9);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    CHECK(code.mean.value()[i] == 0.0);
    CHECK(code.log_var.value()[i] == 0.0);
    CHECK(code.z.value()[i] == eps[i]);
  }
}

TEST_CASE("encoding is deterministic for a fixed seed") {
  Rng rng(2);
  const Tensor<double> x = random_input(rng, 2, 36, 16);
  auto run = [&] {
    auto m = ModelBundle<double>::create(tiny(), DecoderMode::multi, 2, false, 3);
    Tape<double> tape;
    const NoiseSource<double> noise(5, 7);
    return m.encode(tape, tape.constant(x), PassMode::train(), &noise, 1).z.value();
  };
  const Tensor<double> a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("sample variance matches exp(log_var)") {
  Rng rng(3);
  auto m = ModelBundle<double>::create(tiny(), DecoderMode::multi, 2, false, 3);
  const Tensor<double> x = random_input(rng, 1, 36, 4);
  const std::size_t samples = 20000;
  Tensor<double> mean_v, log_var;
  std::vector<double> s1, s2;
  for (std::size_t k = 0; k < samples; ++k) {
    Tape<double> tape;
    const NoiseSource<double> noise(11, k);
    auto code = m.encode(tape, tape.constant(x), PassMode::eval(), &noise, 0);
    if (k == 0) {
      mean_v = code.mean.value();
      log_var = code.log_var.value();
      s1.assign(mean_v.size(), 0.0);
      s2.assign(mean_v.size(), 0.0);
    }
    for (std::size_t i = 0; i < s1.size(); ++i) {
      const double d = code.z.value()[i] - mean_v[i];
      s1[i] += d;
      s2[i] += d * d;
    }
  }
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const double var = s2[i] / samples - (s1[i] / samples) * (s1[i] / samples);
    CHECK(std::abs(var / std::exp(log_var[i]) - 1.0) < 0.05);
  }
}

TEST_CASE("multi-decoder routing isolation") {
  Rng rng(4);
  auto m = ModelBundle<double>::create(tiny(), DecoderMode::multi, 2, false, 3);
  const Tensor<double> z = random_input(rng, 2, 4, 16);
  auto decode0 = [&] {
    Tape<double> tape;
    return m.decode(tape, tape.constant(z), 0, PassMode::eval()).value();
  };
  const Tensor<double> before = decode0();
  for (auto& nt : m.decoders[1].blocks[0].conv.weight.values()) nt += 0.5;
  m.decoders[1].output.bias[0] += 3.0;
  const Tensor<double> after = decode0();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
  CHECK(m.decoders.size() == 2);
  CHECK(m.decoders[0].identity_channels == 0);
}

TEST_CASE("shared decoder identity planes") {
  const Tensor<double> p = identity_planes<double>(2, 4, 5, 0);
  CHECK(p.shape() == Shape{2, 4, 5});
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t t = 0; t < 5; ++t) CHECK(p[(b * 4 + c) * 5 + t] == (c == 0 ? 1.0 : 0.0));
    }
  }
  CHECK_THROWS_AS(identity_planes<double>(1, 4, 5, 4), UnknownSpeakerError);

  Rng rng(5);
  auto m = ModelBundle<double>::create(tiny(), DecoderMode::shared, 4, false, 3);
  CHECK(m.decoders.size() == 1);
  CHECK(m.decoders[0].identity_channels == 4);
  const Tensor<double> z = random_input(rng, 2, 4, 16);
  Tape<double> tape;
  auto y0 = m.decode(tape, tape.constant(z), 0, PassMode::eval());
  auto y1 = m.decode(tape, tape.constant(z), 1, PassMode::eval());
  double diff = 0.0;
  for (std::size_t i = 0; i < y0.value().size(); ++i) diff += std::abs(y0.value()[i] - y1.value()[i]);
  CHECK(diff > 0.0);
  CHECK_THROWS_AS(m.decode(tape, tape.constant(z), 4, PassMode::eval()), UnknownSpeakerError);
}

TEST_CASE("decoder output shape follows the input frames") {
  Rng rng(6);
  for (DecoderMode mode : {DecoderMode::shared, DecoderMode::multi}) {
    auto m = ModelBundle<double>::create(tiny(), mode, 3, false, 3);
    for (std::size_t frames : {1u, 7u, 16u}) {
      Tape<double> tape;
      auto code = m.encode(tape, tape.constant(random_input(rng, 2, 36, frames)), PassMode::train(), nullptr, 0);
      CHECK(code.mean.shape() == Shape{2, 4, frames});
      auto y = m.decode(tape, code.z, 2, PassMode::train());
      CHECK(y.shape() == Shape{2, 36, frames});
    }
  }
}

TEST_CASE("critic contracts") {
  Rng rng(7);
  auto m = ModelBundle<double>::create(tiny(), DecoderMode::multi, 2, true, 3);
  const Tensor<double> x = random_input(rng, 3, 36, 16, -10, 10);
  auto scores = [&](std::size_t s) {
    Tape<double> tape;
    return m.criticize(tape, tape.constant(x), s, PassMode::eval()).value();
  };
  const Tensor<double> s1 = scores(1);
  CHECK(s1.shape() == Shape{3});
  CHECK(s1.all_finite());
  for (auto& v : m.critics[0].blocks[1].conv.weight.values()) v *= -2.0;
  const Tensor<double> s1b = scores(1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s1[i] == s1b[i]);
  zero(m.critics[0].head);
  const Tensor<double> zeroed = scores(0);
  for (double v : zeroed.values()) CHECK(v == 0.0);

  auto no_critics = ModelBundle<double>::create(tiny(), DecoderMode::multi, 2, false, 3);
  Tape<double> tape;
  CHECK_THROWS_AS(no_critics.criticize(tape, tape.constant(x), 0, PassMode::eval()), MissingCriticError);
}

TEST_CASE("parameter sets per speaker") {
  for (std::size_t n : {1u, 2u, 4u}) {
    auto multi = ModelBundle<float>::create(ArchConfig{}, DecoderMode::multi, n, true, 1);
    CHECK(multi.decoders.size() == n);
    CHECK(multi.critics.size() == n);
    auto shared = ModelBundle<float>::create(ArchConfig{}, DecoderMode::shared, n, false, 1);
    CHECK(shared.decoders.size() == 1);
    CHECK(shared.critics.empty());
  }
  // Critics never change the generator's initialization.
  auto with = ModelBundle<float>::create(ArchConfig{}, DecoderMode::multi, 2, true, 9);
  auto without = ModelBundle<float>::create(ArchConfig{}, DecoderMode::multi, 2, false, 9);
  auto a = with.encoder_tensors(), b = without.encoder_tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].tensor->size(); ++k) CHECK((*a[i].tensor)[k] == (*b[i].tensor)[k]);
  }
}

TEST_CASE("batch norm in train mode centers every channel") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    BatchNorm<double> bn = BatchNorm<double>::make(3);
    Tape<double> tape;
    auto y = bn.forward(tape, tape.constant(random_input(rng, 4, 3, 9, -5 + trial, 5 + 2 * trial)), PassMode::train());
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t b = 0; b < 4; ++b) {
        for (std::size_t t = 0; t < 9; ++t) m += y.value()[(b * 3 + c) * 9 + t];
      }
      CHECK(std::abs(m / 36.0) < 1e-3);
    }
    CHECK(bn.running_mean[0] != 0.0);
  }
  BatchNorm<double> frozen = BatchNorm<double>::make(3);
  Tape<double> tape;
  frozen.forward(tape, tape.constant(random_input(rng, 2, 3, 4)), PassMode::train_frozen_stats());
  CHECK(frozen.running_mean[0] == 0.0);
  CHECK(frozen.running_var[0] == 1.0);
}

TEST_CASE("encoder output shape is speaker agnostic") {
  Rng rng(9);
  auto m = ModelBundle<double>::create(tiny(), DecoderMode::multi, 3, false, 1);
  Tape<double> tape;
  auto a = m.encode(tape, tape.constant(random_input(rng, 2, 36, 12)), PassMode::eval(), nullptr, 0);
  auto b = m.encode(tape, tape.constant(random_input(rng, 2, 36, 12, 3, 5)), PassMode::eval(), nullptr, 0);
  CHECK(a.mean.shape() == b.mean.shape());
  CHECK_THROWS_AS(m.encode(tape, tape.constant(random_input(rng, 2, 35, 12)), PassMode::eval(), nullptr, 0),
                  ShapeError);
}

TEST_CASE("assembly gradients match finite differences") {
  VerifyOptions o;
  for (const CheckResult& r : assembly_gradient_checks(o)) CHECK_MESSAGE(r.passed, r.name << " " << r.measured);
}
