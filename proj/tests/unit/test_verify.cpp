// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "cyclevc/diffcore/ops.hpp"
#include "cyclevc/verify/verify.hpp"
#include "doctest.h"

using namespace cyclevc;

namespace {

// x^2 with a backward pass scaled by `sign`; -1 is the classic sign bug.
OpCase square_op(double sign) {
  OpCase op;
  op.name = sign > 0 ? "custom/square" : "custom/square-wrong-sign";
  op.inputs = [](Rng& rng) {
    Tensor<double> x({3, 4});
    for (auto& v : x.values()) v = rng.normal();
    return std::vector<Tensor<double>>{x};
  };
  op.forward = [sign](Tape<double>& tape, const std::vector<Var<double>>& in) {
    const Var<double> x = in[0];
    Tensor<double> y(x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * x.value()[i];
    const std::size_t xid = x.id();
    return tape.record(
        std::move(y), {xid},
        [xid, sign](Tape<double>& t, std::span<const double> g) {
          auto gx = t.grad(xid);
          if (gx.empty()) return;
          const auto& xv = t.value(xid);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += sign * 2.0 * xv[i] * g[i];
        },
        "square");
  };
  return op;
}

}  // namespace

TEST_CASE("the default battery passes") {
  const auto results = run_battery();
  CHECK(results.size() > 20);
  for (const auto& r : results) {
    CAPTURE(r.name);
    CAPTURE(r.measured);
    CHECK(r.passed);
    CHECK(r.measured <= r.tolerance);
  }
  std::ostringstream out;
  print_results(out, results);
  CHECK(out.str().find("PASS") != std::string::npos);
  CHECK(out.str().find("FAIL") == std::string::npos);
}

TEST_CASE("a wrong backward pass is caught") {
  const CheckResult good = check_op(square_op(1.0), 5, 3);
  CHECK(good.passed);
  CHECK(good.measured < 1e-6);
  const CheckResult bad = check_op(square_op(-1.0), 5, 3);
  CHECK_FALSE(bad.passed);
  CHECK(bad.measured > 1.0);  // opposite gradients give a relative error near 2

  VerifyOptions o;
  o.gradient_trials = 3;
  o.extra_ops = {square_op(-1.0)};
  const auto results = primitive_gradient_checks(o);
  bool found = false;
  for (const auto& r : results) {
    if (r.name.find("square-wrong-sign") == std::string::npos) continue;
    found = true;
    CHECK_FALSE(r.passed);
  }
  CHECK(found);
  std::ostringstream out;
  print_results(out, results);
  CHECK(out.str().find("FAIL") != std::string::npos);
}

TEST_CASE("gradient_error on a closed form") {
  Tensor<double> w({4}, std::vector<double>{0.5, -1.0, 2.0, 0.25});
  Tensor<double>* params[] = {&w};
  Rng rng(9);
  const double err = gradient_error(
      [&](Tape<double>& tape) {
        Var<double> p = tape.parameter(w);
        return sum(mul(p, mul(p, p)));
      },
      params, rng);
  CHECK(err < 1e-8);
  CHECK(w[2] == 2.0);  // restored after perturbation
}

TEST_CASE("brute-force alignment cost") {
  FeatureSequence a(2, 1), b(3, 1);
  a.values = {0.0f, 2.0f};
  b.values = {0.0f, 1.0f, 2.0f};
  // Best path: (0,0) (0,1) or (1,1), then (1,2); cost 0 + 1 + 0.
  CHECK(brute_force_dtw_cost(a, b) == doctest::Approx(1.0));
  CHECK(brute_force_dtw_cost(a, a) == doctest::Approx(0.0));
}

TEST_CASE("Monte-Carlo KL estimate") {
  const double mu[] = {1.0, -0.5};
  const double lv[] = {0.0, std::log(0.25)};
  double closed = 0.0;
  for (int i = 0; i < 2; ++i) closed += 0.5 * (mu[i] * mu[i] + std::exp(lv[i]) - lv[i] - 1.0);
  Rng rng(4);
  CHECK(monte_carlo_kl(mu, lv, 200000, rng) == doctest::Approx(closed).epsilon(0.02));
}
