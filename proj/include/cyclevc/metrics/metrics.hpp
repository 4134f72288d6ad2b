// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cyclevc/corpus/features.hpp"

namespace cyclevc {

/// Per-dimension global variance, averaged over utterances.
struct GvProfile {
  std::vector<double> per_dim;
  double average = 0.0;
};

// Population variance over frames per utterance and dimension, then the mean
// over utterances.
GvProfile global_variance(const std::vector<FeatureSequence>& utterances);

struct AlignmentPath {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double cost = 0.0;
};

using FrameDistance = std::function<double(const float* a, const float* b, std::size_t dim)>;

double euclidean_distance(const float* a, const float* b, std::size_t dim);

// Minimal-cost monotone path with steps (1,0), (0,1), (1,1). Ties prefer the
// diagonal step, then the step along a.
AlignmentPath dtw_align(const FeatureSequence& a, const FeatureSequence& b,
                        const FrameDistance& distance = euclidean_distance);

// (10 / ln 10) * sqrt(2 * sum_d (a_d - b_d)^2) for one frame pair.
double mcd_frame(const float* a, const float* b, std::size_t dim);

// Mean frame MCD in dB; aligns with DTW first when the lengths differ.
double mcd(const FeatureSequence& a, const FeatureSequence& b);

struct ModulationOptions {
  std::size_t segment = 64;
  std::size_t hop = 32;
  double floor = 1e-30;
};

// Log of the segment-averaged power spectrum of each dimension's trajectory
// (Hann-windowed segments). Layout [dim][bin], segment / 2 + 1 bins.
std::vector<double> log_modulation_spectrum(const FeatureSequence& seq, const ModulationOptions& options = {});

// RMS difference of the two log modulation spectra over all (dim, bin).
// Unequal lengths are aligned with DTW first.
double msd(const FeatureSequence& a, const FeatureSequence& b, const ModulationOptions& options = {});

// Warps both sequences along a path into equal-length sequences.
std::pair<FeatureSequence, FeatureSequence> apply_alignment(const FeatureSequence& a, const FeatureSequence& b,
                                                            const AlignmentPath& path);

/// One row of the per-run report CSV.
struct MetricRecord {
  std::string pair;  // "F-to-F", ..., or "Average"
  std::string variant;
  std::uint64_t seed = 0;
  std::string metric;  // "MCD" or "MSD"
  double value = 0.0;
};

struct SummaryRow {
  std::string pair;
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over seeds, 0 for one seed
  std::size_t runs = 0;
};

// Pair-row order used in every table.
const std::vector<std::string>& pair_rows();

std::string pair_label(const std::string& source_group, const std::string& target_group);

// Adds an "Average" record per (variant, seed, metric): the mean of that run's
// pair rows.
std::vector<MetricRecord> with_average_rows(const std::vector<MetricRecord>& records);

// Mean and standard deviation over seeds for each (pair, variant, metric).
std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records);

inline constexpr const char* kReportHeader = "pair,variant,seed,metric,value";
inline constexpr const char* kSummaryHeader = "pair,variant,metric,mean,std,runs";
inline constexpr const char* kGvHeader = "dim,value";

void write_report_csv(std::ostream& out, const std::vector<MetricRecord>& records);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_gv_csv(std::ostream& out, const GvProfile& profile);

// "mean ± std" table with one column per variant, one block per metric.
std::string format_table(const std::vector<SummaryRow>& rows);

}  // namespace cyclevc
