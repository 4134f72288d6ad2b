// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cyclevc/corpus/features.hpp"
#include "cyclevc/diffcore/random.hpp"
#include "cyclevc/diffcore/tape.hpp"
#include "cyclevc/metrics/metrics.hpp"

namespace cyclevc {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst error seen
  double tolerance = 0.0;
  std::string detail;
};

struct GradientCheckOptions {
  double step = 1e-6;
  std::size_t max_coordinates = 48;  // all coordinates when there are fewer
  std::size_t directions = 2;        // extra random directional derivatives
};

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over
// a random subset of coordinates plus random directional derivatives, with
// central differences. `loss` must record a scalar and reach `params` through
// tape.parameter(); the tensors are perturbed in place and restored.
double gradient_error(const std::function<Var<double>(Tape<double>&)>& loss, std::span<Tensor<double>* const> params,
                      Rng& rng, const GradientCheckOptions& options = {});

/// An operation under test: random inputs and the forward computation. The
/// output is reduced to a scalar with fixed random weights.
struct OpCase {
  std::string name;
  std::function<std::vector<Tensor<double>>(Rng&)> inputs;
  std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)> forward;
  double tolerance = 1e-4;
};

CheckResult check_op(const OpCase& op, std::size_t trials, std::uint64_t seed);

// Every primitive operation of the tape library.
std::vector<OpCase> primitive_op_cases();

struct VerifyOptions {
  std::uint64_t seed = 20261016;
  std::size_t gradient_trials = 20;
  std::size_t kl_draws = 20;
  std::size_t kl_samples = 10000;
  std::size_t composition_trials = 5;
  std::size_t dtw_trials = 50;
  std::vector<OpCase> extra_ops;  // checked like the built-in primitives
};

std::vector<CheckResult> primitive_gradient_checks(const VerifyOptions& options);
std::vector<CheckResult> assembly_gradient_checks(const VerifyOptions& options);
std::vector<CheckResult> kl_checks(const VerifyOptions& options);
std::vector<CheckResult> composition_checks(const VerifyOptions& options);
std::vector<CheckResult> metric_checks(const VerifyOptions& options);

std::vector<CheckResult> run_battery(const VerifyOptions& options = {});

// Minimal total cost over every monotone alignment path, by enumeration.
double brute_force_dtw_cost(const FeatureSequence& a, const FeatureSequence& b);

// Monte-Carlo estimate of KL(N(mu, exp(log_var)) || N(0, 1)), summed over elements.
double monte_carlo_kl(std::span<const double> mu, std::span<const double> log_var, std::size_t samples, Rng& rng);

void print_results(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace cyclevc
