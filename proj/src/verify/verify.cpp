// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/verify/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

#include "cyclevc/losses/losses.hpp"
#include "cyclevc/netblocks/model.hpp"

namespace cyclevc {
namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<double> normal_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double eval_loss(const std::function<Var<double>(Tape<double>&)>& loss) {
  Tape<double> tape;
  return loss(tape).item();
}

CheckResult make_result(std::string name, double worst, double tol, std::size_t trials) {
  CheckResult r;
  r.name = std::move(name);
  r.measured = worst;
  r.tolerance = tol;
  r.passed = std::isfinite(worst) && worst <= tol;
  r.detail = std::to_string(trials) + " trials";
  return r;
}

// Tiny architecture used for assembly-level checks.
ArchConfig tiny_arch() {
  ArchConfig a;
  a.hidden = 4;
  a.latent = 4;
  a.kernel = 3;
  a.encoder_blocks = 2;
  a.decoder_blocks = 2;
  a.critic_blocks = 2;
  return a;
}

constexpr std::size_t kTinyBatch = 2;
constexpr std::size_t kTinyFrames = 16;

// Perturbs batch-norm affine parameters away from their (1, 0) initialization
// so their gradients are exercised at generic values.
void jitter(ModelBundle<double>& m, Rng& rng) {
  for (auto& nt : m.all_tensors()) {
    if (!nt.trainable) continue;
    for (auto& v : nt.tensor->values()) v += 0.1 * rng.normal();
  }
}

std::vector<Tensor<double>*> params_of(const TensorList<double>& list) { return trainable_tensors(list); }

}  // namespace

double gradient_error(const std::function<Var<double>(Tape<double>&)>& loss, std::span<Tensor<double>* const> params,
                      Rng& rng, const GradientCheckOptions& o) {
  for (auto* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  struct Coord {
    Tensor<double>* p;
    std::size_t i;
  };
  std::vector<Coord> coords;
  std::vector<double> flat_grad;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      coords.push_back({p, i});
      flat_grad.push_back(p->grad()[i]);
    }
  }
  std::vector<std::size_t> chosen(coords.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
  if (chosen.size() > o.max_coordinates) {
    for (std::size_t i = 0; i < o.max_coordinates; ++i) std::swap(chosen[i], chosen[i + rng.below(chosen.size() - i)]);
    chosen.resize(o.max_coordinates);
  }

  std::vector<double> analytic, numeric;
  const double h = o.step;
  for (std::size_t c : chosen) {
    double& v = (*coords[c].p)[coords[c].i];
    const double saved = v;
    v = saved + h;
    const double up = eval_loss(loss);
    v = saved - h;
    const double down = eval_loss(loss);
    v = saved;
    analytic.push_back(flat_grad[c]);
    numeric.push_back((up - down) / (2.0 * h));
  }
  for (std::size_t d = 0; d < o.directions; ++d) {
    std::vector<double> dir(coords.size());
    for (auto& x : dir) x = rng.normal();
    const double n = norm(dir);
    for (auto& x : dir) x /= n;
    std::vector<double> saved(coords.size());
    for (std::size_t c = 0; c < coords.size(); ++c) saved[c] = (*coords[c].p)[coords[c].i];
    auto shift = [&](double s) {
      for (std::size_t c = 0; c < coords.size(); ++c) (*coords[c].p)[coords[c].i] = saved[c] + s * dir[c];
    };
    shift(h);
    const double up = eval_loss(loss);
    shift(-h);
    const double down = eval_loss(loss);
    shift(0.0);
    double dot = 0.0;
    for (std::size_t c = 0; c < coords.size(); ++c) dot += flat_grad[c] * dir[c];
    analytic.push_back(dot);
    numeric.push_back((up - down) / (2.0 * h));
  }
  std::vector<double> diff(analytic.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
  const double scale = std::max({norm(analytic), norm(numeric), 1e-10});
  for (auto* p : params) p->zero_grad();
  return norm(diff) / scale;
}

CheckResult check_op(const OpCase& op, std::size_t trials, std::uint64_t seed) {
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = Rng::keyed(seed, {tag_key(op.name), t});
    std::vector<Tensor<double>> inputs = op.inputs(rng);
    std::vector<Tensor<double>*> params;
    for (auto& in : inputs) params.push_back(&in);
    Shape out_shape;
    {
      Tape<double> tape;
      std::vector<Var<double>> vars;
      for (auto& in : inputs) vars.push_back(tape.constant(in));
      out_shape = op.forward(tape, vars).shape();
    }
    const Tensor<double> weights = out_shape.empty() ? Tensor<double>::scalar(rng.uniform(0.5, 1.5))
                                                     : random_tensor(rng, out_shape);
    auto loss = [&](Tape<double>& tape) {
      std::vector<Var<double>> vars;
      for (auto& in : inputs) vars.push_back(tape.parameter(in));
      return sum(mul(op.forward(tape, vars), tape.constant(weights)));
    };
    worst = std::max(worst, gradient_error(loss, params, rng));
  }
  return make_result("grad/" + op.name, worst, op.tolerance, trials);
}

std::vector<OpCase> primitive_op_cases() {
  using V = std::vector<Var<double>>;
  using In = std::vector<Tensor<double>>;
  std::vector<OpCase> ops;
  auto binary = [&](const char* name, ElementwiseOp kind, bool broadcast) {
    ops.push_back({name,
                   [broadcast](Rng& r) {
                     return In{random_tensor(r, {2, 3, 4}), broadcast ? random_tensor(r, {1}) : random_tensor(r, {2, 3, 4})};
                   },
                   [kind](Tape<double>&, const V& v) { return elementwise<double>(kind, v[0], v[1]); }});
  };
  binary("add", ElementwiseOp::add, false);
  binary("sub", ElementwiseOp::sub, false);
  binary("mul", ElementwiseOp::mul, false);
  binary("add-broadcast", ElementwiseOp::add, true);
  binary("sub-broadcast", ElementwiseOp::sub, true);
  binary("mul-broadcast", ElementwiseOp::mul, true);
  auto unary = [&](const char* name, ElementwiseOp kind, double lo, double hi) {
    ops.push_back({name, [lo, hi](Rng& r) { return In{random_tensor(r, {3, 5}, lo, hi)}; },
                   [kind](Tape<double>&, const V& v) { return elementwise<double>(kind, v[0]); }});
  };
  unary("exp", ElementwiseOp::exp, -2.0, 2.0);
  unary("log", ElementwiseOp::log, 0.2, 3.0);
  unary("sigmoid", ElementwiseOp::sigmoid, -4.0, 4.0);
  unary("square", ElementwiseOp::square, -2.0, 2.0);
  unary("negate", ElementwiseOp::negate, -2.0, 2.0);
  ops.push_back({"scale", [](Rng& r) { return In{random_tensor(r, {4, 3})}; },
                 [](Tape<double>&, const V& v) { return scale(v[0], -1.75); }});
  ops.push_back({"sum-all", [](Rng& r) { return In{random_tensor(r, {2, 3, 4})}; },
                 [](Tape<double>&, const V& v) { return sum(v[0]); }});
  ops.push_back({"sum-axes", [](Rng& r) { return In{random_tensor(r, {2, 3, 4})}; },
                 [](Tape<double>&, const V& v) { return sum(v[0], {0, 2}); }});
  ops.push_back({"mean-keepdims", [](Rng& r) { return In{random_tensor(r, {2, 3, 4})}; },
                 [](Tape<double>&, const V& v) { return mean(v[0], {1}, true); }});
  ops.push_back({"matmul", [](Rng& r) { return In{random_tensor(r, {3, 4}), random_tensor(r, {4, 5})}; },
                 [](Tape<double>&, const V& v) { return matmul(v[0], v[1]); }});
  ops.push_back({"conv1d",
                 [](Rng& r) { return In{random_tensor(r, {2, 3, 7}), random_tensor(r, {4, 3, 3}), random_tensor(r, {4})}; },
                 [](Tape<double>&, const V& v) { return conv1d(v[0], v[1], std::optional<Var<double>>(v[2]), 1, 1); }});
  ops.push_back({"conv1d-strided",
                 [](Rng& r) { return In{random_tensor(r, {2, 2, 9}), random_tensor(r, {3, 2, 4})}; },
                 [](Tape<double>&, const V& v) { return conv1d<double>(v[0], v[1], std::nullopt, 2, 2); }});
  ops.push_back({"slice", [](Rng& r) { return In{random_tensor(r, {2, 6, 3})}; },
                 [](Tape<double>&, const V& v) { return slice(v[0], 1, 1, 4); }});
  ops.push_back({"concat", [](Rng& r) { return In{random_tensor(r, {2, 2, 3}), random_tensor(r, {2, 4, 3})}; },
                 [](Tape<double>&, const V& v) { return concat(v[0], v[1], 1); }});
  ops.push_back({"reshape", [](Rng& r) { return In{random_tensor(r, {2, 6})}; },
                 [](Tape<double>&, const V& v) { return mul(reshape(v[0], {3, 4}), reshape(v[0], {3, 4})); }});
  ops.push_back({"glu", [](Rng& r) { return In{random_tensor(r, {2, 6, 5}, -2.0, 2.0)}; },
                 [](Tape<double>&, const V& v) { return glu(v[0]); }});
  ops.push_back({"batch-norm-train",
                 [](Rng& r) {
                   return In{random_tensor(r, {3, 2, 5}, -2.0, 2.0), random_tensor(r, {2}, 0.5, 1.5), random_tensor(r, {2})};
                 },
                 [](Tape<double>&, const V& v) {
                   Tensor<double> rm({2}, 0.0), rv({2}, 1.0);
                   return batch_norm(v[0], v[1], v[2], rm, rv, 1e-5, 0.1, PassMode::train_frozen_stats());
                 }});
  ops.push_back({"batch-norm-eval",
                 [](Rng& r) {
                   return In{random_tensor(r, {3, 2, 5}, -2.0, 2.0), random_tensor(r, {2}, 0.5, 1.5), random_tensor(r, {2})};
                 },
                 [](Tape<double>&, const V& v) {
                   Tensor<double> rm({2}, std::vector<double>{0.3, -0.2}), rv({2}, std::vector<double>{0.7, 1.9});
                   return batch_norm(v[0], v[1], v[2], rm, rv, 1e-5, 0.1, PassMode::eval());
                 }});
  return ops;
}

std::vector<CheckResult> primitive_gradient_checks(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  for (const auto& op : primitive_op_cases()) out.push_back(check_op(op, options.gradient_trials, options.seed));
  for (const auto& op : options.extra_ops) out.push_back(check_op(op, options.gradient_trials, options.seed));
  return out;
}

std::vector<CheckResult> assembly_gradient_checks(const VerifyOptions& options) {
  const double tol = 1e-3;
  const PassMode mode = PassMode::train_frozen_stats();
  const ArchConfig arch = tiny_arch();
  const std::size_t speakers = 3;
  const std::vector<std::size_t> all = {0, 1, 2};

  struct Case {
    std::string name;
    DecoderMode mode;
    bool critics;
    // Builds the loss; `x` and `reals` are the data tensors of the trial.
    std::function<Var<double>(ModelBundle<double>&, LossContext<double>&, Var<double>, const RealBatches<double>&)> loss;
    std::function<std::vector<Tensor<double>*>(ModelBundle<double>&)> params;
  };
  auto everything = [](ModelBundle<double>& m) { return params_of(m.all_tensors()); };
  std::vector<Case> cases = {
      {"glu-block", DecoderMode::shared, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         return sum(square(m.encoder.blocks[0].forward(ctx.tape, x, ctx.mode)));
       },
       [](ModelBundle<double>& m) {
         TensorList<double> l;
         m.encoder.blocks[0].collect(l, "b");
         return params_of(l);
       }},
      {"encoder", DecoderMode::shared, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         LatentCode<double> c = m.encode(ctx.tape, x, ctx.mode, ctx.noise, 17);
         return add(sum(square(c.z)), sum(c.log_var));
       },
       [](ModelBundle<double>& m) { return params_of(m.encoder_tensors()); }},
      {"decoder-shared", DecoderMode::shared, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         LatentCode<double> c = m.encode(ctx.tape, x, ctx.mode, ctx.noise, 17);
         return recon_nll(x, m.decode(ctx.tape, c.z, 1, ctx.mode));
       },
       everything},
      {"decoder-multi", DecoderMode::multi, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         LatentCode<double> c = m.encode(ctx.tape, x, ctx.mode, ctx.noise, 17);
         return recon_nll(x, m.decode(ctx.tape, c.z, 2, ctx.mode));
       },
       everything},
      {"critic", DecoderMode::multi, true,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         return sum(square(m.criticize(ctx.tape, x, 1, ctx.mode)));
       },
       [](ModelBundle<double>& m) { return params_of(m.critic_tensors()); }},
      {"vae-loss", DecoderMode::shared, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         return vae_loss(m, ctx, x, 0).total;
       },
       everything},
      {"cyclevae-total-single", DecoderMode::shared, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         return cyclevae_total(m, ctx, x, 1, std::span<const std::size_t>(all), LossWeights::cyclevae()).total;
       },
       everything},
      {"cyclevae-total-multi", DecoderMode::multi, false,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>&) {
         return cyclevae_total(m, ctx, x, 0, std::span<const std::size_t>(all), LossWeights::cyclevae()).total;
       },
       everything},
      {"vaewgan-loss", DecoderMode::shared, true,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>& reals) {
         return vaewgan_loss(m, ctx, x, 0, 2, reals[2], LossWeights{1.0, 0.0}).total;
       },
       everything},
      {"cyclevaewgan-total-multi", DecoderMode::multi, true,
       [&](ModelBundle<double>& m, LossContext<double>& ctx, Var<double> x, const RealBatches<double>& reals) {
         return cyclevaewgan_total(m, ctx, x, 2, std::span<const std::size_t>(all), reals, LossWeights::cyclevaewgan())
             .total;
       },
       everything},
  };

  std::vector<CheckResult> out;
  for (const auto& c : cases) {
    double worst = 0.0;
    for (std::size_t t = 0; t < options.gradient_trials; ++t) {
      Rng rng = Rng::keyed(options.seed, {tag_key(c.name), t});
      ModelBundle<double> m = ModelBundle<double>::create(arch, c.mode, speakers, c.critics, options.seed + t);
      jitter(m, rng);
      Tensor<double> x = normal_tensor(rng, {kTinyBatch, kFeatureDim, kTinyFrames});
      std::vector<Tensor<double>> real_data;
      for (std::size_t s = 0; s < speakers; ++s) real_data.push_back(normal_tensor(rng, {kTinyBatch, kFeatureDim, kTinyFrames}));
      const NoiseSource<double> noise(options.seed, t);
      std::vector<Tensor<double>*> params = c.params(m);
      params.push_back(&x);
      auto loss = [&](Tape<double>& tape) {
        LossContext<double> ctx{tape, &noise, mode};
        RealBatches<double> reals;
        for (auto& r : real_data) reals.push_back(tape.constant(r));
        return c.loss(m, ctx, tape.parameter(x), reals);
      };
      worst = std::max(worst, gradient_error(loss, params, rng));
    }
    out.push_back(make_result("grad/" + c.name, worst, tol, options.gradient_trials));
  }
  return out;
}

double monte_carlo_kl(std::span<const double> mu, std::span<const double> log_var, std::size_t samples, Rng& rng) {
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double log_ratio = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double sd = std::exp(0.5 * log_var[i]);
      const double z = mu[i] + sd * rng.normal();
      const double log_q = -0.5 * (log_2pi + log_var[i] + (z - mu[i]) * (z - mu[i]) / (sd * sd));
      const double log_p = -0.5 * (log_2pi + z * z);
      log_ratio += log_q - log_p;
    }
    total += log_ratio;
  }
  return total / static_cast<double>(samples);
}

std::vector<CheckResult> kl_checks(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  const std::size_t latent = 16, frames = 4;
  double worst = 0.0;
  for (std::size_t d = 0; d < options.kl_draws; ++d) {
    Rng rng = Rng::keyed(options.seed, {tag_key("kl-draw"), d});
    Tensor<double> mu = random_tensor(rng, {1, latent, frames}, -3.0, 3.0);
    Tensor<double> lv = random_tensor(rng, {1, latent, frames}, -2.0, 2.0);
    Tape<double> tape;
    LatentCode<double> code{tape.constant(mu), tape.constant(lv), {}};
    // Per-frame average, matching the closed form's normalization.
    const double closed = kl_to_standard_normal(code).item() * static_cast<double>(frames);
    const double mc = monte_carlo_kl(mu.values(), lv.values(), options.kl_samples, rng);
    worst = std::max(worst, std::abs(closed - mc) / std::abs(mc));
  }
  CheckResult mc = make_result("kl/monte-carlo", worst, 0.01, options.kl_draws);
  mc.detail = std::to_string(options.kl_draws) + " draws, " + std::to_string(options.kl_samples) + " samples";
  out.push_back(mc);

  Tape<double> tape;
  LatentCode<double> unit{tape.constant(Tensor<double>({1, 1, 1}, 1.0)), tape.constant(Tensor<double>({1, 1, 1}, 0.0)), {}};
  const double anchor = kl_to_standard_normal(unit).item();
  CheckResult a;
  a.name = "kl/mu1-var1";
  a.measured = std::abs(anchor - 0.5);
  a.tolerance = 0.0;
  a.passed = anchor == 0.5;
  a.detail = "value " + std::to_string(anchor);
  out.push_back(a);
  return out;
}

std::vector<CheckResult> composition_checks(const VerifyOptions& options) {
  const ArchConfig arch = tiny_arch();
  const std::size_t speakers = 3;
  const std::vector<std::size_t> all = {0, 1, 2};
  const PassMode mode = PassMode::train_frozen_stats();
  const double tol = 1e-5;

  struct Worst {
    double eq3 = 0, eq6 = 0, eq7 = 0, eq9 = 0, eq10 = 0, wgan_off = 0, wgan_off_total = 0, cycle_off = 0, report = 0;
  } w;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); };

  for (std::size_t t = 0; t < options.composition_trials; ++t) {
    Rng rng = Rng::keyed(options.seed, {tag_key("composition"), t});
    const LossWeights lw{rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
    const NoiseSource<double> noise(options.seed, 1000 + t);
    const Tensor<double> x = normal_tensor(rng, {kTinyBatch, kFeatureDim, kTinyFrames});
    std::vector<Tensor<double>> real_data;
    for (std::size_t s = 0; s < speakers; ++s) real_data.push_back(normal_tensor(rng, {kTinyBatch, kFeatureDim, kTinyFrames}));
    const std::size_t source = rng.below(speakers);
    const std::size_t target = (source + 1 + rng.below(speakers - 1)) % speakers;

    for (DecoderMode dm : {DecoderMode::shared, DecoderMode::multi}) {
      ModelBundle<double> m = ModelBundle<double>::create(arch, dm, speakers, true, options.seed + 31 * t);
      jitter(m, rng);

      // Each helper evaluates on a fresh tape.
      auto with = [&](auto&& body) {
        Tape<double> tape;
        LossContext<double> ctx{tape, &noise, mode};
        RealBatches<double> reals;
        for (auto& r : real_data) reals.push_back(tape.constant(r));
        return body(ctx, tape.constant(x), reals);
      };
      auto vae = [&](std::size_t s) {
        return with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>&) {
          return vae_loss(m, ctx, in, s).total.item();
        });
      };
      auto cyc = [&](std::size_t s, std::size_t y) {
        return with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>&) {
          return cycle_loss(m, ctx, in, s, y).total().item();
        });
      };
      // Critic term of decode(encode(x), y) against speaker y's real batch.
      auto critic_term = [&](std::size_t y) {
        return with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>& reals) {
          LatentCode<double> code = m.encode(ctx.tape, in, ctx.mode, ctx.noise, self_noise_key());
          Var<double> fake = m.decode(ctx.tape, code.z, y, ctx.mode);
          return wgan_loss(m, ctx, y == source ? in : reals[y], fake, y).item();
        });
      };

      // Eq. (6) and (7).
      const double vae_x = vae(source);
      const double c6 = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>&) {
        return cyclevae_loss(m, ctx, in, source, target, lw).total.item();
      });
      w.eq6 = std::max(w.eq6, rel(c6, vae_x + lw.cycle * cyc(source, target)));
      double expect7 = 0.0;
      for (std::size_t y : all) {
        if (y != source) expect7 += vae_x + lw.cycle * cyc(source, y);
      }
      double report_err = 0.0;
      const double c7 = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>&) {
        LossReport<double> r = cyclevae_total(m, ctx, in, source, std::span<const std::size_t>(all), lw);
        report_err = rel(r.total.item(), r.reconstructed_total());
        return r.total.item();
      });
      w.eq7 = std::max(w.eq7, rel(c7, expect7));
      w.report = std::max(w.report, report_err);

      // Eq. (9) and (10).
      const double self_critic = critic_term(source);
      double expect10 = 0.0;
      for (std::size_t y : all) {
        if (y == source) continue;
        expect10 += vae_x + lw.cycle * cyc(source, y) + lw.wgan * (self_critic + critic_term(y));
      }
      const double expect9 =
          vae_x + lw.cycle * cyc(source, target) + lw.wgan * (self_critic + critic_term(target));
      auto reals_for_source = [&](const RealBatches<double>& reals, Var<double> in) {
        RealBatches<double> r = reals;
        r[source] = in;
        return r;
      };
      const double c9 = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>& reals) {
        return cyclevaewgan_loss(m, ctx, in, source, target, reals_for_source(reals, in), lw).total.item();
      });
      w.eq9 = std::max(w.eq9, rel(c9, expect9));
      const double c10 = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>& reals) {
        LossReport<double> r = cyclevaewgan_total(m, ctx, in, source, std::span<const std::size_t>(all),
                                                  reals_for_source(reals, in), lw);
        report_err = rel(r.total.item(), r.reconstructed_total());
        return r.total.item();
      });
      w.eq10 = std::max(w.eq10, rel(c10, expect10));
      w.report = std::max(w.report, report_err);

      // lambda_1 = 0 reduces (9)/(10) to (6)/(7).
      const LossWeights no_wgan{0.0, lw.cycle};
      const double c9_off = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>& reals) {
        return cyclevaewgan_loss(m, ctx, in, source, target, reals_for_source(reals, in), no_wgan).total.item();
      });
      w.wgan_off = std::max(w.wgan_off, rel(c9_off, c6));
      const double c10_off = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>& reals) {
        return cyclevaewgan_total(m, ctx, in, source, std::span<const std::size_t>(all), reals_for_source(reals, in),
                                  no_wgan)
            .total.item();
      });
      w.wgan_off_total = std::max(w.wgan_off_total, rel(c10_off, c7));

      // lambda_2 = 0 reduces (6) to the plain VAE loss.
      const double c6_off = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>&) {
        return cyclevae_loss(m, ctx, in, source, target, LossWeights{0.0, 0.0}).total.item();
      });
      w.cycle_off = std::max(w.cycle_off, rel(c6_off, vae_x));

      // Eq. (3), shared decoder only.
      if (dm == DecoderMode::shared) {
        const double c3 = with([&](LossContext<double>& ctx, Var<double> in, const RealBatches<double>& reals) {
          return vaewgan_loss(m, ctx, in, source, target, reals[target], lw).total.item();
        });
        w.eq3 = std::max(w.eq3, rel(c3, vae_x + lw.wgan * critic_term(target)));
      }
    }
  }
  const std::size_t n = options.composition_trials;
  return {make_result("compose/vaewgan", w.eq3, tol, n),
          make_result("compose/cyclevae-pair", w.eq6, tol, n),
          make_result("compose/cyclevae-sum", w.eq7, tol, n),
          make_result("compose/cyclevaewgan-pair", w.eq9, tol, n),
          make_result("compose/cyclevaewgan-sum", w.eq10, tol, n),
          make_result("compose/wgan-weight-zero-pair", w.wgan_off, tol, n),
          make_result("compose/wgan-weight-zero-sum", w.wgan_off_total, tol, n),
          make_result("compose/cycle-weight-zero", w.cycle_off, tol, n),
          make_result("compose/report-parts", w.report, tol, n)};
}

double brute_force_dtw_cost(const FeatureSequence& a, const FeatureSequence& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double cost) {
    cost += euclidean_distance(a.frame(i), b.frame(j), a.dim);
    if (i == a.frames - 1 && j == b.frames - 1) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < a.frames) walk(i + 1, j, cost);
    if (j + 1 < b.frames) walk(i, j + 1, cost);
    if (i + 1 < a.frames && j + 1 < b.frames) walk(i + 1, j + 1, cost);
  };
  walk(0, 0, 0.0);
  return best;
}

std::vector<CheckResult> metric_checks(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  Rng rng = Rng::keyed(options.seed, {tag_key("metrics")});
  auto random_seq = [&](std::size_t frames, std::size_t dim) {
    FeatureSequence s(frames, dim);
    for (auto& v : s.values) v = static_cast<float>(rng.normal());
    return s;
  };

  const FeatureSequence a = random_seq(128, kFeatureDim);
  auto exact = [](std::string name, double value, double expected, double tol) {
    CheckResult r;
    r.name = std::move(name);
    r.measured = std::abs(value - expected);
    r.tolerance = tol;
    r.passed = r.measured <= tol;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "value %.12g", value);
    r.detail = buf;
    return r;
  };
  out.push_back(exact("metric/mcd-identical", mcd(a, a), 0.0, 0.0));
  out.push_back(exact("metric/msd-identical", msd(a, a), 0.0, 0.0));
  FeatureSequence constant(50, kFeatureDim);
  std::fill(constant.values.begin(), constant.values.end(), 0.75f);
  out.push_back(exact("metric/gv-constant", global_variance({constant}).average, 0.0, 0.0));
  FeatureSequence zero(1, kFeatureDim), unit(1, kFeatureDim);
  unit.at(0, 7) = 1.0f;
  out.push_back(exact("metric/mcd-single-unit", mcd(zero, unit), 10.0 / std::numbers::ln10 * std::sqrt(2.0), 1e-6));

  double worst = 0.0;
  bool paths_ok = true;
  for (std::size_t t = 0; t < options.dtw_trials; ++t) {
    const std::size_t dim = 1 + rng.below(4);
    const FeatureSequence p = random_seq(1 + rng.below(6), dim);
    const FeatureSequence q = random_seq(1 + rng.below(6), dim);
    const AlignmentPath path = dtw_align(p, q);
    const double brute = brute_force_dtw_cost(p, q);
    worst = std::max(worst, std::abs(path.cost - brute) / std::max(1.0, brute));
    double along = 0.0;
    for (const auto& [i, j] : path.pairs) along += euclidean_distance(p.frame(i), q.frame(j), dim);
    if (std::abs(along - path.cost) > 1e-9 * std::max(1.0, along)) paths_ok = false;
    if (path.pairs.front() != std::pair<std::size_t, std::size_t>{0, 0} ||
        path.pairs.back() != std::pair<std::size_t, std::size_t>{p.frames - 1, q.frames - 1}) {
      paths_ok = false;
    }
  }
  CheckResult dtw = make_result("metric/dtw-brute-force", worst, 1e-12, options.dtw_trials);
  dtw.passed = dtw.passed && paths_ok;
  out.push_back(dtw);
  return out;
}

std::vector<CheckResult> run_battery(const VerifyOptions& options) {
  std::vector<CheckResult> all;
  for (auto part : {primitive_gradient_checks, assembly_gradient_checks, kl_checks, composition_checks, metric_checks}) {
    std::vector<CheckResult> r = part(options);
    all.insert(all.end(), r.begin(), r.end());
  }
  return all;
}

void print_results(std::ostream& out, const std::vector<CheckResult>& results) {
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-4s %-36s err=%-12.4g tol=%-10.3g %s", r.passed ? "PASS" : "FAIL",
                  r.name.c_str(), r.measured, r.tolerance, r.detail.c_str());
    out << buf << "\n";
  }
}

}  // namespace cyclevc
