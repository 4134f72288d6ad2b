// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <memory>
#include <numeric>

#include "cyclevc/diffcore/ops.hpp"
#include "cyclevc/losses/losses.hpp"
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

Tensor<double> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

LatentCode<double> code_of(Tape<double>& tape, const Tensor<double>& mu, const Tensor<double>& lv) {
  LatentCode<double> c;
  c.mean = tape.constant(mu);
  c.log_var = tape.constant(lv);
  c.z = c.mean;
  return c;
}

void zero_heads(ModelBundle<double>& m) {
  for (auto* layer : {&m.encoder.mean_head, &m.encoder.log_var_head}) {
    for (auto& v : layer->weight.values()) v = 0.0;
    for (auto& v : layer->bias.values()) v = 0.0;
  }
  for (auto& d : m.decoders) {
    for (auto& v : d.output.weight.values()) v = 0.0;
    for (auto& v : d.output.bias.values()) v = 0.0;
  }
}

// A fixture that evaluates losses on fresh tapes with identical noise.
struct Fixture {
  ModelBundle<double> model;
  Tensor<double> x;
  std::vector<Tensor<double>> reals;
  std::uint64_t step = 3;

  Fixture(DecoderMode mode, std::size_t speakers, bool critics, std::uint64_t seed) {
    model = ModelBundle<double>::create(tiny(), mode, speakers, critics, seed);
    Rng rng(seed + 100);
    x = random_tensor(rng, {2, 36, 16});
    for (std::size_t s = 0; s < speakers; ++s) reals.push_back(random_tensor(rng, {2, 36, 16}));
  }

  // Tapes outlive each call so the returned handles stay readable.
  std::vector<std::unique_ptr<Tape<double>>> tapes;

  template <typename F>
  auto eval(F&& f) {
    Tape<double>& tape = *tapes.emplace_back(std::make_unique<Tape<double>>());
    const NoiseSource<double> noise(1, step);
    LossContext<double> ctx{tape, &noise, PassMode::train_frozen_stats()};
    RealBatches<double> r;
    for (auto& t : reals) r.push_back(tape.constant(t));
    return f(ctx, tape.constant(x), r);
  }
};

}  // namespace

TEST_CASE("kl closed form") {
  Tape<double> tape;
  CHECK(kl_to_standard_normal(code_of(tape, Tensor<double>({1, 3, 2}), Tensor<double>({1, 3, 2}))).item() == 0.0);
  CHECK(kl_to_standard_normal(code_of(tape, Tensor<double>({1, 1, 1}, 1.0), Tensor<double>({1, 1, 1}))).item() == 0.5);
  const double k = kl_to_standard_normal(code_of(tape, Tensor<double>({1, 1, 1}), Tensor<double>({1, 1, 1}, std::log(4.0)))).item();
  CHECK(std::abs(k - 0.80685) < 1e-5);
  Rng rng(1);
  const std::vector<double> mu{0.0}, lv{std::log(4.0)};
  CHECK(rel(monte_carlo_kl(mu, lv, 200000, rng), k) < 0.01);
}

TEST_CASE("kl is non-negative and zero only at the prior") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Tape<double> tape;
    const double scale = i % 2 ? 1e-3 : 2.0;
    const double k = kl_to_standard_normal(
                         code_of(tape, random_tensor(rng, {2, 3, 4}, scale), random_tensor(rng, {2, 3, 4}, scale)))
                         .item();
    CHECK(k >= 0.0);
    if (scale > 1.0) CHECK(k > 1e-9);
  }
}

TEST_CASE("recon_nll") {
  Rng rng(3);
  Tape<double> tape;
  const Tensor<double> a = random_tensor(rng, {3, 5, 7}), b = random_tensor(rng, {3, 5, 7});
  CHECK(recon_nll(tape.constant(a), tape.constant(a)).item() == 0.0);
  CHECK(recon_nll(tape.constant(Tensor<double>({1, 1, 1}, 1.0)), tape.constant(Tensor<double>({1, 1, 1}))).item() == 0.5);
  double brute = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t t = 0; t < 7; ++t) {
      for (std::size_t d = 0; d < 5; ++d) {
        const std::size_t i = (n * 5 + d) * 7 + t;
        brute += 0.5 * (a[i] - b[i]) * (a[i] - b[i]);
      }
    }
  }
  brute /= 21.0;
  CHECK(rel(recon_nll(tape.constant(a), tape.constant(b)).item(), brute) < 1e-6);
  CHECK_THROWS_AS(recon_nll(tape.constant(a), tape.constant(Tensor<double>({3, 5, 6}))), ShapeError);
}

TEST_CASE("vae loss") {
  SUBCASE("zeroed heads on zero input") {
    auto m = ModelBundle<double>::create(tiny(), DecoderMode::shared, 2, false, 1);
    zero_heads(m);
    Tape<double> tape;
    const NoiseSource<double> noise(1, 0);
    LossContext<double> ctx{tape, nullptr, PassMode::train()};
    auto r = vae_loss(m, ctx, tape.constant(Tensor<double>({2, 36, 8})), 0);
    CHECK(r.kl.item() == 0.0);
    CHECK(r.recon.item() == 0.0);
    CHECK(r.total.item() == 0.0);
  }
  SUBCASE("total is kl + recon") {
    Fixture f(DecoderMode::shared, 3, false, 2);
    auto r = f.eval([&](auto& ctx, auto x, auto&) { return vae_loss(f.model, ctx, x, 1); });
    CHECK(r.total.item() == r.kl.item() + r.recon.item());
  }
  SUBCASE("identity vector of width zero reduces the shared model to a per-speaker decoder") {
    Fixture f(DecoderMode::multi, 1, false, 3);
    ModelBundle<double> shared = f.model;
    shared.mode = DecoderMode::shared;
    const double a = f.eval([&](auto& ctx, auto x, auto&) { return vae_loss(f.model, ctx, x, 0); }).total.item();
    const double b = f.eval([&](auto& ctx, auto x, auto&) { return vae_loss(shared, ctx, x, 0); }).total.item();
    CHECK(rel(a, b) <= 1e-6);
  }
}

TEST_CASE("wgan loss") {
  Fixture f(DecoderMode::multi, 2, true, 4);
  SUBCASE("identical batches") {
    const double v = f.eval([&](auto& ctx, auto x, auto&) { return wgan_loss(f.model, ctx, x, x, 0); }).item();
    CHECK(v == 0.0);
  }
  SUBCASE("constant critic") {
    for (auto& v : f.model.critics[1].head.weight.values()) v = 0.0;
    f.model.critics[1].head.bias[0] = 0.7;
    const double v = f.eval([&](auto& ctx, auto x, auto& r) { return wgan_loss(f.model, ctx, r[0], x, 1); }).item();
    CHECK(v == 0.0);
  }
  SUBCASE("hand-built critic reading one coordinate") {
    // No batch norm, one block with a gate saturated open and a head that reads one channel.
    ArchConfig a = tiny();
    a.batch_norm = false;
    a.critic_blocks = 1;
    a.hidden = 1;
    auto m = ModelBundle<double>::create(a, DecoderMode::multi, 1, true, 5);
    auto& conv = m.critics[0].blocks[0].conv;
    for (auto& v : conv.weight.values()) v = 0.0;
    conv.bias[0] = 0.0;
    conv.bias[1] = 60.0;  // sigmoid(60) == 1 in double precision
    conv.weight[(0 * 36 + 0) * 3 + 1] = 1.0;  // value channel reads feature 0 at the centre tap
    m.critics[0].head.weight[0] = 1.0;
    m.critics[0].head.bias[0] = 0.0;
    Tensor<double> real({2, 36, 2}), fake({2, 36, 2});
    const double rv[4] = {1.0, 3.0, 2.0, 6.0}, fv[4] = {0.5, 0.5, -1.0, 1.0};
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t t = 0; t < 2; ++t) {
        real[(b * 36) * 2 + t] = rv[b * 2 + t];
        fake[(b * 36) * 2 + t] = fv[b * 2 + t];
      }
    }
    Tape<double> tape;
    LossContext<double> ctx{tape, nullptr, PassMode::eval()};
    const double v = wgan_loss(m, ctx, tape.constant(real), tape.constant(fake), 0).item();
    // Critic score = mean over time of feature 0; loss = mean real score - mean fake score.
    CHECK(std::abs(v - ((2.0 + 4.0) / 2.0 - (0.5 + 0.0) / 2.0)) < 1e-12);
  }
}

TEST_CASE("cycle loss") {
  SUBCASE("finite and non-negative") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Fixture f(DecoderMode::multi, 3, false, seed);
      auto c = f.eval([&](auto& ctx, auto x, auto&) { return cycle_loss(f.model, ctx, x, 0, 2); });
      CHECK(std::isfinite(c.total().item()));
      CHECK(c.kl.item() >= 0.0);
      CHECK(c.recon.item() >= 0.0);
    }
  }
  SUBCASE("matches a manual composition") {
    Fixture f(DecoderMode::multi, 3, false, 6);
    const double built = f.eval([&](auto& ctx, auto x, auto&) { return cycle_loss(f.model, ctx, x, 0, 2); }).total().item();
    const double manual = f.eval([&](auto& ctx, auto x, auto&) {
      auto& tape = ctx.tape;
      auto c1 = f.model.encode(tape, x, ctx.mode, ctx.noise, self_noise_key());
      auto converted = f.model.decode(tape, c1.z, 2, ctx.mode);
      auto c2 = f.model.encode(tape, converted, ctx.mode, ctx.noise, cycle_noise_key(2));
      auto back = f.model.decode(tape, c2.z, 0, ctx.mode);
      return add(kl_to_standard_normal(c2), recon_nll(x, back));
    }).item();
    CHECK(rel(built, manual) <= 1e-6);
  }
  SUBCASE("a perfectly reconstructing model has zero cycle reconstruction for Y = X") {
    // Encoder mean = x on the first channels (latent = feature dim), no noise,
    // decoder copies z back: identity maps throughout.
    ArchConfig a;
    a.encoder_blocks = 0;
    a.decoder_blocks = 0;
    a.latent = 36;
    a.batch_norm = false;
    auto m = ModelBundle<double>::create(a, DecoderMode::multi, 2, false, 1);
    for (auto* layer : {&m.encoder.mean_head, &m.decoders[0].output, &m.decoders[1].output}) {
      for (auto& v : layer->weight.values()) v = 0.0;
      for (auto& v : layer->bias.values()) v = 0.0;
      for (std::size_t i = 0; i < 36; ++i) layer->weight[i * 36 + i] = 1.0;
    }
    Rng rng(7);
    Tape<double> tape;
    LossContext<double> ctx{tape, nullptr, PassMode::eval()};
    auto c = cycle_loss(m, ctx, tape.constant(random_tensor(rng, {2, 36, 5})), 0, 0);
    CHECK(c.recon.item() == 0.0);
  }
}

TEST_CASE("cyclevae loss weights") {
  Fixture f(DecoderMode::multi, 2, false, 8);
  auto at = [&](double w2) {
    return f.eval([&](auto& ctx, auto x, auto&) { return cyclevae_loss(f.model, ctx, x, 0, 1, LossWeights{0.0, w2}); });
  };
  const double vae = f.eval([&](auto& ctx, auto x, auto&) { return vae_loss(f.model, ctx, x, 0); }).total.item();
  const double cyc = f.eval([&](auto& ctx, auto x, auto&) { return cycle_loss(f.model, ctx, x, 0, 1); }).total().item();
  CHECK(at(0.0).total.item() == vae);
  CHECK(rel(at(1.0).total.item(), vae + cyc) <= 1e-6);
  CHECK(rel(at(2.0).total.item() - at(1.0).total.item(), cyc) <= 1e-6);
  CHECK_THROWS_AS(at(-1.0), ConfigError);
}

TEST_CASE("cyclevae total over speaker sets") {
  Fixture f(DecoderMode::multi, 4, false, 9);
  const LossWeights w = LossWeights::cyclevae();
  auto pair = [&](std::size_t y) {
    return f.eval([&](auto& ctx, auto x, auto&) { return cyclevae_loss(f.model, ctx, x, 1, y, w); }).total.item();
  };
  auto total = [&](std::vector<std::size_t> speakers) {
    return f.eval([&](auto& ctx, auto x, auto&) {
      return cyclevae_total(f.model, ctx, x, 1, std::span<const std::size_t>(speakers), w);
    });
  };
  CHECK(rel(total({0, 1}).total.item(), pair(0)) <= 1e-12);
  CHECK(rel(total({0, 1, 2, 3}).total.item(), pair(0) + pair(2) + pair(3)) <= 1e-5);
  const double vae = f.eval([&](auto& ctx, auto x, auto&) { return vae_loss(f.model, ctx, x, 1); }).total.item();
  const auto single = total({1});
  CHECK(single.total.item() == vae);
  CHECK_FALSE(single.cycle_kl.valid());
  const auto full = total({0, 1, 2, 3});
  CHECK(rel(full.total.item(), full.reconstructed_total()) <= 1e-12);
  CHECK_THROWS_AS(total({0, 2}), UnknownSpeakerError);
}

TEST_CASE("vaewgan loss") {
  Fixture f(DecoderMode::shared, 3, true, 10);
  const double vae = f.eval([&](auto& ctx, auto x, auto&) { return vae_loss(f.model, ctx, x, 0); }).total.item();
  auto at = [&](double w1) {
    return f.eval([&](auto& ctx, auto x, auto& r) { return vaewgan_loss(f.model, ctx, x, 0, 2, r[2], LossWeights{w1, 0.0}); });
  };
  CHECK(at(0.0).total.item() == vae);
  const auto r1 = at(1.0);
  const double critic = f.eval([&](auto& ctx, auto x, auto& r) {
    auto code = f.model.encode(ctx.tape, x, ctx.mode, ctx.noise, self_noise_key());
    return wgan_loss(f.model, ctx, r[2], f.model.decode(ctx.tape, code.z, 2, ctx.mode), 2);
  }).item();
  CHECK(rel(r1.total.item(), vae + critic) <= 1e-6);
  for (auto& v : f.model.critics[2].head.weight.values()) v = 0.0;
  CHECK(rel(at(3.0).total.item(), vae) <= 1e-12);

  Fixture multi(DecoderMode::multi, 2, true, 10);
  CHECK_THROWS_AS(multi.eval([&](auto& ctx, auto x, auto& r) {
    return vaewgan_loss(multi.model, ctx, x, 0, 1, r[1], LossWeights{1.0, 0.0});
  }), VariantMismatchError);
}

TEST_CASE("cyclevaewgan loss and total") {
  Fixture f(DecoderMode::multi, 4, true, 11);
  const LossWeights full = LossWeights::cyclevaewgan();
  auto pair = [&](std::size_t y, LossWeights w) {
    return f.eval([&](auto& ctx, auto x, auto& r) { return cyclevaewgan_loss(f.model, ctx, x, 0, y, r, w); });
  };
  auto cyc = [&](std::size_t y) {
    return f.eval([&](auto& ctx, auto x, auto&) { return cyclevae_loss(f.model, ctx, x, 0, y, LossWeights::cyclevae()); })
        .total.item();
  };
  CHECK(pair(2, {0.0, 1.0}).total.item() == cyc(2));
  const auto p = pair(2, full);
  const double self_w = f.eval([&](auto& ctx, auto x, auto& r) {
    auto code = f.model.encode(ctx.tape, x, ctx.mode, ctx.noise, self_noise_key());
    return wgan_loss(f.model, ctx, r[0], f.model.decode(ctx.tape, code.z, 0, ctx.mode), 0);
  }).item();
  const double conv_w = f.eval([&](auto& ctx, auto x, auto& r) {
    auto code = f.model.encode(ctx.tape, x, ctx.mode, ctx.noise, self_noise_key());
    return wgan_loss(f.model, ctx, r[2], f.model.decode(ctx.tape, code.z, 2, ctx.mode), 2);
  }).item();
  CHECK(rel(p.total.item(), cyc(2) + self_w + conv_w) <= 1e-6);

  std::vector<std::size_t> all{0, 1, 2, 3};
  auto total = [&](std::vector<std::size_t> speakers, LossWeights w) {
    return f.eval([&](auto& ctx, auto x, auto& r) {
      return cyclevaewgan_total(f.model, ctx, x, 0, std::span<const std::size_t>(speakers), r, w);
    });
  };
  CHECK(rel(total(all, full).total.item(),
            pair(1, full).total.item() + pair(2, full).total.item() + pair(3, full).total.item()) <= 1e-5);
  CHECK(rel(total({0, 3}, full).total.item(), pair(3, full).total.item()) <= 1e-12);
  const double cyc_total = f.eval([&](auto& ctx, auto x, auto&) {
    return cyclevae_total(f.model, ctx, x, 0, std::span<const std::size_t>(all), LossWeights::cyclevae());
  }).total.item();
  CHECK(rel(total(all, {0.0, 1.0}).total.item(), cyc_total) <= 1e-12);
  const auto t = total(all, full);
  CHECK(rel(t.total.item(), t.reconstructed_total()) <= 1e-12);

  for (auto& c : f.model.critics) {
    for (auto& v : c.head.weight.values()) v = 0.0;
  }
  CHECK(rel(pair(2, full).total.item(), cyc(2)) <= 1e-12);
}

TEST_CASE("with lambda2 = 0 the cycle-only decoders get no gradient") {
  // For source 0 the decoders of speakers 1..3 are reached only via the cycle path.
  Fixture f(DecoderMode::multi, 4, false, 12);
  std::vector<std::size_t> all{0, 1, 2, 3};
  for (auto& nt : f.model.all_tensors()) {
    if (nt.trainable) nt.tensor->zero_grad();
  }
  Tape<double> tape;
  const NoiseSource<double> noise(1, 0);
  LossContext<double> ctx{tape, &noise, PassMode::train_frozen_stats()};
  auto r = cyclevae_total(f.model, ctx, tape.constant(f.x), 0, std::span<const std::size_t>(all), LossWeights{0.0, 0.0});
  tape.backward(r.total);
  for (std::size_t s = 1; s < 4; ++s) {
    TensorList<double> list;
    f.model.decoders[s].collect(list, "d");
    for (auto& nt : list) {
      if (!nt.trainable) continue;
      for (double g : nt.tensor->grad()) CHECK(g == 0.0);
    }
  }
  double own = 0.0;
  for (double g : f.model.decoders[0].output.weight.grad()) own += std::abs(g);
  CHECK(own > 0.0);
}

TEST_CASE("composition battery") {
  VerifyOptions o;
  for (const CheckResult& r : composition_checks(o)) CHECK_MESSAGE(r.passed, r.name << " " << r.measured);
  for (const CheckResult& r : kl_checks(o)) CHECK_MESSAGE(r.passed, r.name << " " << r.measured);
}
