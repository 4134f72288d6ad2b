// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cyclevc/metrics/metrics.hpp"
#include "cyclevc/verify/verify.hpp"
#include "doctest.h"

using namespace cyclevc;

namespace {

FeatureSequence random_seq(Rng& rng, std::size_t frames, std::size_t dim = 36, double scale = 1.0) {
  FeatureSequence s(frames, dim);
  for (auto& v : s.values) v = static_cast<float>(scale * rng.normal());
  return s;
}

FeatureSequence constant_seq(std::size_t frames, float value, std::size_t dim = 36) {
  FeatureSequence s(frames, dim);
  std::fill(s.values.begin(), s.values.end(), value);
  return s;
}

const double kMcdUnit = 10.0 / std::numbers::ln10 * std::sqrt(2.0);

}  // namespace

TEST_CASE("global variance") {
  const GvProfile flat = global_variance({constant_seq(5, 2.5f)});
  for (double v : flat.per_dim) CHECK(v == 0.0);
  CHECK(flat.average == 0.0);

  FeatureSequence two(2, 1);
  two.at(0, 0) = 0;
  two.at(1, 0) = 2;
  CHECK(global_variance({two}).per_dim[0] == 1.0);
  CHECK_THROWS_AS(global_variance({}), DomainError);

  Rng rng(1);
  FeatureSequence s = random_seq(rng, 30), p = s;
  for (std::size_t t = 0; t < 30; ++t) {
    for (std::size_t d = 0; d < 36; ++d) p.at(t, d) = s.at((t * 7) % 30, d);
  }
  const GvProfile a = global_variance({s}), b = global_variance({p});
  for (std::size_t d = 0; d < 36; ++d) CHECK(a.per_dim[d] == doctest::Approx(b.per_dim[d]).epsilon(1e-12));
}

TEST_CASE("mcd") {
  Rng rng(2);
  const FeatureSequence a = random_seq(rng, 20);
  CHECK(mcd(a, a) == 0.0);
  FeatureSequence one(1, 36), other(1, 36);
  other.at(0, 17) = 1.0f;
  CHECK(std::abs(mcd(one, other) - kMcdUnit) < 1e-6);
  CHECK(std::abs(kMcdUnit - 6.1419) < 1e-4);

  const FeatureSequence b = random_seq(rng, 20);
  CHECK(mcd(a, b) == doctest::Approx(mcd(b, a)).epsilon(1e-12));
  const FeatureSequence c0 = constant_seq(6, 0.5f);
  for (float delta : {0.25f, 1.0f, -3.0f}) {
    FeatureSequence shifted = c0;
    for (std::size_t t = 0; t < 6; ++t) shifted.at(t, 4) += delta;
    CHECK(mcd(c0, shifted) == doctest::Approx(kMcdUnit * std::abs(delta)).epsilon(1e-6));
  }
  CHECK_THROWS_AS(mcd(a, random_seq(rng, 20, 24)), ShapeError);
  // Unequal lengths align first: a sequence against its frame-doubled copy.
  FeatureSequence doubled(40, 36);
  for (std::size_t t = 0; t < 40; ++t) {
    for (std::size_t d = 0; d < 36; ++d) doubled.at(t, d) = a.at(t / 2, d);
  }
  CHECK(mcd(a, doubled) == 0.0);
}

TEST_CASE("msd") {
  Rng rng(3);
  const FeatureSequence a = random_seq(rng, 100), b = random_seq(rng, 100);
  CHECK(msd(a, a) == 0.0);
  CHECK(msd(a, b) == doctest::Approx(msd(b, a)).epsilon(1e-12));
  FeatureSequence twice = a;
  for (auto& v : twice.values) v *= 2.0f;
  CHECK(std::abs(msd(a, twice) - std::log(4.0)) < 1e-6);
  CHECK_THROWS_AS(log_modulation_spectrum(random_seq(rng, 63)), DomainError);
  const auto spec = log_modulation_spectrum(a);
  CHECK(spec.size() == 36 * 33);
}

TEST_CASE("dtw alignment") {
  Rng rng(4);
  const FeatureSequence a = random_seq(rng, 7);
  const AlignmentPath self = dtw_align(a, a);
  CHECK(self.cost == 0.0);
  CHECK(self.pairs.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(self.pairs[i] == std::pair<std::size_t, std::size_t>{i, i});

  const FeatureSequence zero1 = constant_seq(1, 0.0f, 1), zero2 = constant_seq(2, 0.0f, 1);
  const AlignmentPath forced = dtw_align(zero1, zero2);
  CHECK(forced.cost == 0.0);
  CHECK(forced.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {0, 1}});

  for (int trial = 0; trial < 50; ++trial) {
    const FeatureSequence x = random_seq(rng, 1 + rng.below(6), 3), y = random_seq(rng, 1 + rng.below(6), 3);
    const AlignmentPath p = dtw_align(x, y);
    CHECK(p.cost == doctest::Approx(brute_force_dtw_cost(x, y)).epsilon(1e-12));
    CHECK(p.pairs.front() == std::pair<std::size_t, std::size_t>{0, 0});
    CHECK(p.pairs.back() == std::pair<std::size_t, std::size_t>{x.frames - 1, y.frames - 1});
    for (std::size_t k = 1; k < p.pairs.size(); ++k) {
      const std::size_t di = p.pairs[k].first - p.pairs[k - 1].first, dj = p.pairs[k].second - p.pairs[k - 1].second;
      CHECK(di <= 1);
      CHECK(dj <= 1);
      CHECK(di + dj >= 1);
    }
  }
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureSequence x = random_seq(rng, 8, 4), y = random_seq(rng, 8, 4);
    double diagonal = 0.0;
    for (std::size_t t = 0; t < 8; ++t) diagonal += euclidean_distance(x.frame(t), y.frame(t), 4);
    CHECK(dtw_align(x, y).cost <= diagonal + 1e-12);
  }
}

TEST_CASE("average rows and summaries") {
  std::vector<MetricRecord> recs;
  const std::vector<double> values{7.0, 8.0, 6.5, 7.25};
  for (std::uint64_t seed : {1u, 2u}) {
    for (std::size_t i = 0; i < 4; ++i) recs.push_back({pair_rows()[i], "vae", seed, "MCD", values[i] + seed});
  }
  const auto all = with_average_rows(recs);
  CHECK(all.size() == recs.size() + 2);
  for (const auto& r : all) {
    if (r.pair != "Average") continue;
    CHECK(std::abs(r.value - (7.1875 + static_cast<double>(r.seed))) < 1e-6);
  }
  const auto summary = summarize(all);
  CHECK(summary.size() == 5);
  for (const auto& s : summary) {
    CHECK(s.runs == 2);
    CHECK(s.stddev == doctest::Approx(std::sqrt(0.5)));
  }
  // Duplicated seeds give zero spread.
  std::vector<MetricRecord> dup;
  for (int k = 0; k < 2; ++k) dup.push_back({"F-to-M", "vae", 3, "MSD", 1.25});
  CHECK(summarize(dup)[0].stddev == 0.0);
  CHECK(summarize({dup[0]})[0].stddev == 0.0);

  CHECK(pair_label("F", "M") == "F-to-M");
  CHECK(pair_rows() == std::vector<std::string>{"F-to-F", "M-to-F", "F-to-M", "M-to-M"});
}

TEST_CASE("csv schemas") {
  std::ostringstream report, summary, gv;
  write_report_csv(report, {{"F-to-F", "vae", 1, "MCD", 6.5}});
  CHECK(report.str().rfind(std::string(kReportHeader) + "\n", 0) == 0);
  CHECK(report.str().find("F-to-F,vae,1,MCD,6.5") != std::string::npos);
  write_summary_csv(summary, {{"Average", "vae", "MSD", 1.5, 0.25, 3}});
  CHECK(summary.str().rfind(std::string(kSummaryHeader) + "\n", 0) == 0);
  write_gv_csv(gv, GvProfile{{0.5, 0.25}, 0.375});
  CHECK(gv.str().rfind(std::string(kGvHeader) + "\n", 0) == 0);
  const std::string gv_text = gv.str();
  CHECK(std::count(gv_text.begin(), gv_text.end(), '\n') == 3);
  const std::string table = format_table({{"Average", "vae", "MCD", 7.45, 0.1, 3}});
  CHECK(table.find("7.45") != std::string::npos);
  CHECK(table.find("±") != std::string::npos);
}

TEST_CASE("metric battery") {
  VerifyOptions o;
  for (const CheckResult& r : metric_checks(o)) CHECK_MESSAGE(r.passed, r.name << " " << r.measured);
}
