// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

#include "cyclevc/diffcore/errors.hpp"

namespace cyclevc {
namespace {

const double kMcdScale = 10.0 / std::numbers::ln10;

void check_same_dim(const FeatureSequence& a, const FeatureSequence& b) {
  if (a.dim != b.dim) {
    throw ShapeError("feature dims differ: " + std::to_string(a.dim) + " vs " + std::to_string(b.dim));
  }
  if (a.frames == 0 || b.frames == 0) throw DomainError("empty feature sequence");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

GvProfile global_variance(const std::vector<FeatureSequence>& utterances) {
  if (utterances.empty()) throw DomainError("global variance of an empty utterance set");
  const std::size_t dim = utterances.front().dim;
  GvProfile gv;
  gv.per_dim.assign(dim, 0.0);
  for (const auto& u : utterances) {
    if (u.dim != dim) throw ShapeError("utterances disagree on feature dim");
    if (u.frames == 0) throw DomainError("utterance '" + u.utterance_id + "' has no frames");
    for (std::size_t d = 0; d < dim; ++d) {
      double mean = 0.0;
      for (std::size_t t = 0; t < u.frames; ++t) mean += u.at(t, d);
      mean /= static_cast<double>(u.frames);
      double var = 0.0;
      for (std::size_t t = 0; t < u.frames; ++t) {
        const double c = u.at(t, d) - mean;
        var += c * c;
      }
      gv.per_dim[d] += var / static_cast<double>(u.frames);
    }
  }
  for (auto& v : gv.per_dim) v /= static_cast<double>(utterances.size());
  for (double v : gv.per_dim) gv.average += v;
  gv.average /= static_cast<double>(dim);
  return gv;
}

double euclidean_distance(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += diff * diff;
  }
  return std::sqrt(s);
}

AlignmentPath dtw_align(const FeatureSequence& a, const FeatureSequence& b, const FrameDistance& distance) {
  check_same_dim(a, b);
  const std::size_t n = a.frames, m = b.frames;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(n * m, inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = distance(a.frame(i), b.frame(j), a.dim);
      double best = (i == 0 && j == 0) ? 0.0 : inf;
      if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
      if (i > 0) best = std::min(best, at(i - 1, j));
      if (j > 0) best = std::min(best, at(i, j - 1));
      at(i, j) = best + d;
    }
  }

  AlignmentPath path;
  path.cost = at(n - 1, m - 1);
  std::size_t i = n - 1, j = m - 1;
  path.pairs.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    path.pairs.emplace_back(i, j);
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

double mcd_frame(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += diff * diff;
  }
  return kMcdScale * std::sqrt(2.0 * s);
}

std::pair<FeatureSequence, FeatureSequence> apply_alignment(const FeatureSequence& a, const FeatureSequence& b,
                                                            const AlignmentPath& path) {
  FeatureSequence wa(path.pairs.size(), a.dim), wb(path.pairs.size(), b.dim);
  wa.utterance_id = a.utterance_id;
  wb.utterance_id = b.utterance_id;
  for (std::size_t k = 0; k < path.pairs.size(); ++k) {
    std::copy_n(a.frame(path.pairs[k].first), a.dim, wa.values.begin() + static_cast<std::ptrdiff_t>(k * a.dim));
    std::copy_n(b.frame(path.pairs[k].second), b.dim, wb.values.begin() + static_cast<std::ptrdiff_t>(k * b.dim));
  }
  return {std::move(wa), std::move(wb)};
}

double mcd(const FeatureSequence& a, const FeatureSequence& b) {
  check_same_dim(a, b);
  double total = 0.0;
  if (a.frames == b.frames) {
    for (std::size_t t = 0; t < a.frames; ++t) total += mcd_frame(a.frame(t), b.frame(t), a.dim);
    return total / static_cast<double>(a.frames);
  }
  const AlignmentPath path = dtw_align(a, b);
  for (const auto& [i, j] : path.pairs) total += mcd_frame(a.frame(i), b.frame(j), a.dim);
  return total / static_cast<double>(path.pairs.size());
}

std::vector<double> log_modulation_spectrum(const FeatureSequence& seq, const ModulationOptions& o) {
  if (o.segment < 2 || o.hop == 0) throw DomainError("invalid modulation segment settings");
  if (seq.frames < o.segment) {
    throw DomainError("sequence of " + std::to_string(seq.frames) + " frames is shorter than one " +
                      std::to_string(o.segment) + "-frame segment");
  }
  const std::size_t n = o.segment;
  const std::size_t bins = n / 2 + 1;
  const std::size_t segments = (seq.frames - n) / o.hop + 1;

  std::vector<double> window(n);
  for (std::size_t k = 0; k < n; ++k) {
    window[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
  }
  std::vector<double> cos_table(n), sin_table(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    cos_table[k] = std::cos(w);
    sin_table[k] = std::sin(w);
  }

  std::vector<double> out(seq.dim * bins, 0.0);
  std::vector<double> frame(n);
  for (std::size_t d = 0; d < seq.dim; ++d) {
    for (std::size_t s = 0; s < segments; ++s) {
      for (std::size_t k = 0; k < n; ++k) frame[k] = window[k] * seq.at(s * o.hop + k, d);
      for (std::size_t f = 0; f < bins; ++f) {
        double re = 0.0, im = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t idx = (f * k) % n;
          re += frame[k] * cos_table[idx];
          im -= frame[k] * sin_table[idx];
        }
        out[d * bins + f] += re * re + im * im;
      }
    }
    for (std::size_t f = 0; f < bins; ++f) {
      out[d * bins + f] = std::log(out[d * bins + f] / static_cast<double>(segments) + o.floor);
    }
  }
  return out;
}

double msd(const FeatureSequence& a, const FeatureSequence& b, const ModulationOptions& options) {
  check_same_dim(a, b);
  if (a.frames != b.frames) {
    const auto [wa, wb] = apply_alignment(a, b, dtw_align(a, b));
    return msd(wa, wb, options);
  }
  const std::vector<double> sa = log_modulation_spectrum(a, options);
  const std::vector<double> sb = log_modulation_spectrum(b, options);
  double s = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) s += (sa[i] - sb[i]) * (sa[i] - sb[i]);
  return std::sqrt(s / static_cast<double>(sa.size()));
}

const std::vector<std::string>& pair_rows() {
  static const std::vector<std::string> rows = {"F-to-F", "M-to-F", "F-to-M", "M-to-M"};
  return rows;
}

std::string pair_label(const std::string& source_group, const std::string& target_group) {
  return source_group + "-to-" + target_group;
}

std::vector<MetricRecord> with_average_rows(const std::vector<MetricRecord>& records) {
  using Key = std::tuple<std::string, std::uint64_t, std::string>;
  std::map<Key, std::pair<double, std::size_t>> sums;
  std::vector<Key> order;
  std::vector<MetricRecord> out;
  for (const auto& r : records) {
    if (r.pair == "Average") continue;
    out.push_back(r);
    const Key key{r.variant, r.seed, r.metric};
    auto [it, inserted] = sums.try_emplace(key, 0.0, 0);
    if (inserted) order.push_back(key);
    it->second.first += r.value;
    it->second.second += 1;
  }
  for (const auto& key : order) {
    const auto& [total, count] = sums.at(key);
    out.push_back({"Average", std::get<0>(key), std::get<1>(key), std::get<2>(key), total / static_cast<double>(count)});
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    const Key key{r.pair, r.variant, r.metric};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(r.value);
  }
  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    const auto& values = groups.at(key);
    SummaryRow row{std::get<0>(key), std::get<1>(key), std::get<2>(key), 0.0, 0.0, values.size()};
    for (double v : values) row.mean += v;
    row.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

void write_report_csv(std::ostream& out, const std::vector<MetricRecord>& records) {
  out << kReportHeader << "\n";
  for (const auto& r : records) {
    out << r.pair << "," << r.variant << "," << r.seed << "," << r.metric << "," << fmt(r.value) << "\n";
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << "\n";
  for (const auto& r : rows) {
    out << r.pair << "," << r.variant << "," << r.metric << "," << fmt(r.mean) << "," << fmt(r.stddev) << ","
        << r.runs << "\n";
  }
}

void write_gv_csv(std::ostream& out, const GvProfile& profile) {
  out << kGvHeader << "\n";
  for (std::size_t d = 0; d < profile.per_dim.size(); ++d) out << d << "," << fmt(profile.per_dim[d]) << "\n";
}

std::string format_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> metrics, variants;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : rows) {
    remember(metrics, r.metric);
    remember(variants, r.variant);
  }
  std::vector<std::string> row_names = pair_rows();
  row_names.push_back("Average");

  std::ostringstream out;
  for (const auto& metric : metrics) {
    out << metric << " (mean ± std)\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-10s", "");
    out << buf;
    for (const auto& v : variants) {
      std::snprintf(buf, sizeof(buf), " %22s", v.c_str());
      out << buf;
    }
    out << "\n";
    for (const auto& name : row_names) {
      bool any = false;
      std::ostringstream line;
      std::snprintf(buf, sizeof(buf), "%-10s", name.c_str());
      line << buf;
      for (const auto& v : variants) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const SummaryRow& r) {
          return r.metric == metric && r.variant == v && r.pair == name;
        });
        if (it == rows.end()) {
          std::snprintf(buf, sizeof(buf), " %22s", "-");
        } else {
          any = true;
          char cell[64];
          std::snprintf(cell, sizeof(cell), "%.3f ± %.3f", it->mean, it->stddev);
          std::snprintf(buf, sizeof(buf), " %23s", cell);
        }
        line << buf;
      }
      if (any) out << line.str() << "\n";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace cyclevc
