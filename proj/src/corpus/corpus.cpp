// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/corpus/corpus.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cyclevc/diffcore/errors.hpp"

namespace cyclevc {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kSinusoids = 8;
constexpr std::size_t kMaxConditionTries = 64;

// Cepstra of smooth all-pole envelopes fall off like rho^n / n.
constexpr double kCepstralDecay = 0.85;

double amplitude_decay(std::size_t d) {
  const double n = static_cast<double>(d);
  return std::pow(kCepstralDecay, n) / (1.0 + n);
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03zu", prefix, i);
  return buf;
}

Matrix random_near_identity(Rng& rng, std::size_t dim, double spread) {
  Matrix m = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  const double s = spread / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += s * rng.normal();
  }
  return m;
}

SpeakerSpec make_speaker(const CorpusOptions& o, std::size_t index, std::size_t dim) {
  SpeakerSpec spec;
  spec.group = index % 2 == 0 ? "F" : "M";
  spec.id = "spk" + std::to_string(index);
  if (o.identity_rendering) {
    Matrix eye = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    spec.mixing.assign(eye.data(), eye.data() + eye.size());
    spec.bias.assign(dim, 0.0);
    spec.noise = 0.0;
    return spec;
  }
  const std::uint64_t group_key = index % 2;
  for (std::size_t attempt = 0; attempt < kMaxConditionTries; ++attempt) {
    Rng group_rng = Rng::keyed(o.seed, {tag_key("group"), group_key, attempt});
    Rng speaker_rng = Rng::keyed(o.seed, {tag_key("speaker"), index, attempt});
    const Matrix group = random_near_identity(group_rng, dim, 0.25);
    const Matrix own = random_near_identity(speaker_rng, dim, 0.15);
    const Matrix mixing = group * own;
    spec.mixing.assign(mixing.data(), mixing.data() + mixing.size());
    if (condition_number(spec.mixing, dim) > 100.0) continue;
    spec.bias.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      spec.bias[d] = amplitude_decay(d) * (0.5 * group_rng.normal() + 0.3 * speaker_rng.normal());
    }
    spec.noise = o.noise;
    return spec;
  }
  throw ConfigError("could not draw a well-conditioned mixing matrix");
}

FeatureSequence render(const SpeakerSpec& spec, const FeatureSequence& content, Rng& noise_rng) {
  const std::size_t dim = content.dim;
  FeatureSequence out(content.frames, dim);
  out.speaker_id = spec.id;
  Eigen::Map<const Matrix> a(spec.mixing.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Eigen::VectorXd c(dim);
  for (std::size_t t = 0; t < content.frames; ++t) {
    for (std::size_t d = 0; d < dim; ++d) c[static_cast<Eigen::Index>(d)] = content.at(t, d);
    const Eigen::VectorXd y = a * c;
    for (std::size_t d = 0; d < dim; ++d) {
      double v = y[static_cast<Eigen::Index>(d)] + spec.bias[d];
      if (spec.noise > 0.0) v += spec.noise * noise_rng.normal();
      out.at(t, d) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace

std::size_t Corpus::speaker_index(std::string_view id) const {
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    if (speakers[i].id == id) return i;
  }
  throw UnknownSpeakerError("unknown speaker '" + std::string(id) + "'");
}

std::vector<std::string> Corpus::speaker_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : speakers) ids.push_back(s.id);
  return ids;
}

std::uint64_t train_content_key(std::size_t speaker, std::size_t utterance) {
  return tag_key("train-content") ^ (speaker * 0x100000001b3ULL + utterance * 0x9e3779b97f4a7c15ULL + 1);
}

std::uint64_t eval_content_key(std::size_t content) {
  return tag_key("eval-content") ^ (content * 0x9e3779b97f4a7c15ULL + 1);
}

FeatureSequence content_trajectory(std::uint64_t seed, std::uint64_t content_key, std::size_t frames,
                                   std::size_t dim) {
  Rng rng = Rng::keyed(seed, {tag_key("content"), content_key});
  FeatureSequence out(frames, dim);
  for (std::size_t d = 0; d < dim; ++d) {
    double period[kSinusoids], phase[kSinusoids], amp[kSinusoids];
    for (std::size_t j = 0; j < kSinusoids; ++j) {
      period[j] = rng.uniform(20.0, 200.0);
      phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      amp[j] = amplitude_decay(d) * rng.uniform(0.5, 1.0);
    }
    for (std::size_t t = 0; t < frames; ++t) {
      double v = 0.0;
      for (std::size_t j = 0; j < kSinusoids; ++j) {
        v += amp[j] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period[j] + phase[j]);
      }
      out.at(t, d) = static_cast<float>(v);
    }
  }
  return out;
}

double condition_number(const std::vector<double>& matrix, std::size_t dim) {
  Eigen::Map<const Matrix> a(matrix.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  return s[0] / s[s.size() - 1];
}

Corpus generate_corpus(const CorpusOptions& o) {
  if (o.speakers < 1 || o.train_per_speaker < 1 || o.eval_per_speaker < 1 || o.frames < 1) {
    throw ConfigError("corpus sizes must all be positive");
  }
  if (o.noise < 0.0) throw ConfigError("noise level must be non-negative");
  const std::size_t dim = 36;
  Corpus corpus;
  corpus.dim = dim;
  for (std::size_t s = 0; s < o.speakers; ++s) corpus.speakers.push_back(make_speaker(o, s, dim));
  for (std::size_t e = 0; e < o.eval_per_speaker; ++e) corpus.eval_content_ids.push_back(numbered("e", e));

  corpus.train.resize(o.speakers);
  corpus.eval.resize(o.speakers);
  for (std::size_t s = 0; s < o.speakers; ++s) {
    const SpeakerSpec& spec = corpus.speakers[s];
    for (std::size_t u = 0; u < o.train_per_speaker; ++u) {
      const FeatureSequence content = content_trajectory(o.seed, train_content_key(s, u), o.frames, dim);
      Rng noise = Rng::keyed(o.seed, {tag_key("noise-train"), s, u});
      FeatureSequence utt = render(spec, content, noise);
      utt.utterance_id = spec.id + "_" + numbered("t", u);
      corpus.train[s].push_back(std::move(utt));
    }
    for (std::size_t e = 0; e < o.eval_per_speaker; ++e) {
      const FeatureSequence content = content_trajectory(o.seed, eval_content_key(e), o.frames, dim);
      Rng noise = Rng::keyed(o.seed, {tag_key("noise-eval"), s, e});
      FeatureSequence utt = render(spec, content, noise);
      utt.utterance_id = corpus.eval_content_ids[e];
      corpus.eval[s].push_back(std::move(utt));
    }
  }
  return corpus;
}

FeatureSequence oracle_convert(const SpeakerSpec& source, const SpeakerSpec& target, const FeatureSequence& x) {
  const std::size_t dim = x.dim;
  if (source.mixing.size() != dim * dim || target.mixing.size() != dim * dim) {
    throw ConfigError("oracle conversion needs synthetic speaker maps");
  }
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::Map<const Matrix> as(source.mixing.data(), n, n);
  Eigen::Map<const Matrix> at(target.mixing.data(), n, n);
  const Matrix map = at * as.partialPivLu().inverse();
  FeatureSequence out(x.frames, dim);
  out.utterance_id = x.utterance_id;
  out.speaker_id = target.id;
  Eigen::VectorXd v(n);
  for (std::size_t t = 0; t < x.frames; ++t) {
    for (std::size_t d = 0; d < dim; ++d) v[static_cast<Eigen::Index>(d)] = x.at(t, d) - source.bias[d];
    const Eigen::VectorXd y = map * v;
    for (std::size_t d = 0; d < dim; ++d) out.at(t, d) = static_cast<float>(y[static_cast<Eigen::Index>(d)] + target.bias[d]);
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (root / "manifest.txt").string());
  manifest << "cyclevc-corpus 1\n";
  manifest << "dim " << corpus.dim << "\n";
  for (const auto& s : corpus.speakers) manifest << "speaker " << s.id << " " << s.group << "\n";
  for (const auto& id : corpus.eval_content_ids) manifest << "eval " << id << "\n";
  if (!manifest) throw IoError("failed writing manifest");

  for (std::size_t s = 0; s < corpus.speakers.size(); ++s) {
    const fs::path train_dir = root / corpus.speakers[s].id / "train";
    const fs::path eval_dir = root / corpus.speakers[s].id / "eval";
    fs::create_directories(train_dir);
    fs::create_directories(eval_dir);
    for (const auto& utt : corpus.train[s]) write_features(utt, train_dir / (utt.utterance_id + ".vcf"));
    for (const auto& utt : corpus.eval[s]) write_features(utt, eval_dir / (utt.utterance_id + ".vcf"));
  }
}

Corpus load_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::ifstream manifest(root / "manifest.txt");
  if (!manifest) throw IoError("no manifest.txt under " + root.string());
  Corpus corpus;
  std::string line;
  std::getline(manifest, line);
  if (line != "cyclevc-corpus 1") throw FormatError("unrecognised corpus manifest header: " + line);
  while (std::getline(manifest, line)) {
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind.empty() || kind[0] == '#') continue;
    if (kind == "dim") {
      fields >> corpus.dim;
    } else if (kind == "speaker") {
      SpeakerSpec spec;
      fields >> spec.id >> spec.group;
      if (spec.id.empty()) throw FormatError("manifest speaker line without id");
      corpus.speakers.push_back(spec);
    } else if (kind == "eval") {
      std::string id;
      fields >> id;
      corpus.eval_content_ids.push_back(id);
    } else {
      throw FormatError("unknown manifest entry '" + kind + "'");
    }
  }

  for (const auto& spec : corpus.speakers) {
    std::vector<FeatureSequence> train;
    const fs::path train_dir = root / spec.id / "train";
    if (fs::exists(train_dir)) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(train_dir)) {
        if (entry.path().extension() == ".vcf") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        train.push_back(read_features(f, corpus.dim));
        train.back().speaker_id = spec.id;
      }
    }
    std::vector<FeatureSequence> eval;
    for (const auto& id : corpus.eval_content_ids) {
      const fs::path f = root / spec.id / "eval" / (id + ".vcf");
      if (!fs::exists(f)) throw FormatError("missing eval utterance " + f.string());
      eval.push_back(read_features(f, corpus.dim));
      eval.back().speaker_id = spec.id;
    }
    corpus.train.push_back(std::move(train));
    corpus.eval.push_back(std::move(eval));
  }
  return corpus;
}

Batch next_batch(const std::vector<FeatureSequence>& utterances, std::size_t batch_size, std::size_t crop_frames,
                 Rng& stream) {
  if (utterances.empty()) throw ConfigError("no utterances to draw a batch from");
  if (batch_size == 0 || crop_frames == 0) throw ConfigError("batch size and crop length must be positive");
  const std::size_t dim = utterances.front().dim;
  Batch batch;
  batch.data = Tensor<float>({batch_size, dim, crop_frames});
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t u = stream.below(utterances.size());
    const FeatureSequence& utt = utterances[u];
    if (utt.frames < crop_frames) {
      throw ConfigError("utterance '" + utt.utterance_id + "' has " + std::to_string(utt.frames) +
                        " frames, shorter than the crop of " + std::to_string(crop_frames));
    }
    const std::size_t offset = stream.below(utt.frames - crop_frames + 1);
    for (std::size_t d = 0; d < dim; ++d) {
      float* dst = batch.data.data() + (b * dim + d) * crop_frames;
      for (std::size_t t = 0; t < crop_frames; ++t) dst[t] = utt.at(offset + t, d);
    }
    batch.utterances.push_back(u);
    batch.offsets.push_back(offset);
  }
  return batch;
}

Tensor<float> sequence_tensor(const FeatureSequence& seq) {
  Tensor<float> t({1, seq.dim, seq.frames});
  for (std::size_t d = 0; d < seq.dim; ++d) {
    for (std::size_t f = 0; f < seq.frames; ++f) t[d * seq.frames + f] = seq.at(f, d);
  }
  return t;
}

FeatureSequence tensor_sequence(const Tensor<float>& t, std::size_t item) {
  if (t.rank() != 3 || item >= t.dim(0)) throw ShapeError("expected a [batch, dim, T] tensor");
  const std::size_t dim = t.dim(1), frames = t.dim(2);
  FeatureSequence seq(frames, dim);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t f = 0; f < frames; ++f) seq.at(f, d) = t[(item * dim + d) * frames + f];
  }
  return seq;
}

FeatureSequence FeatureStats::apply(const FeatureSequence& seq) const {
  FeatureSequence out = seq;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t d = 0; d < seq.dim; ++d) out.at(t, d) = static_cast<float>((seq.at(t, d) - mean[d]) / stddev[d]);
  }
  return out;
}

FeatureSequence FeatureStats::invert(const FeatureSequence& seq) const {
  FeatureSequence out = seq;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t d = 0; d < seq.dim; ++d) out.at(t, d) = static_cast<float>(seq.at(t, d) * stddev[d] + mean[d]);
  }
  return out;
}

FeatureStats compute_stats(const std::vector<const FeatureSequence*>& utterances) {
  std::size_t frames = 0;
  std::size_t dim = 0;
  for (const auto* u : utterances) {
    frames += u->frames;
    dim = u->dim;
  }
  if (frames < 2) throw ConfigError("normalization statistics need at least 2 frames");
  FeatureStats stats;
  stats.mean.assign(dim, 0.0);
  stats.stddev.assign(dim, 0.0);
  for (const auto* u : utterances) {
    for (std::size_t t = 0; t < u->frames; ++t) {
      for (std::size_t d = 0; d < dim; ++d) stats.mean[d] += u->at(t, d);
    }
  }
  for (auto& m : stats.mean) m /= static_cast<double>(frames);
  std::vector<double> var(dim, 0.0);
  for (const auto* u : utterances) {
    for (std::size_t t = 0; t < u->frames; ++t) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double c = u->at(t, d) - stats.mean[d];
        var[d] += c * c;
      }
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    var[d] /= static_cast<double>(frames);
    if (!(var[d] > 0.0)) throw ConfigError("dimension " + std::to_string(d) + " has zero variance");
    stats.stddev[d] = std::sqrt(var[d]);
  }
  return stats;
}

FeatureStats training_stats(const Corpus& corpus) {
  std::vector<const FeatureSequence*> all;
  for (const auto& per_speaker : corpus.train) {
    for (const auto& u : per_speaker) all.push_back(&u);
  }
  return compute_stats(all);
}

Corpus normalized(const Corpus& corpus, const FeatureStats& stats) {
  Corpus out = corpus;
  for (auto& per_speaker : out.train) {
    for (auto& u : per_speaker) u = stats.apply(u);
  }
  for (auto& per_speaker : out.eval) {
    for (auto& u : per_speaker) u = stats.apply(u);
  }
  return out;
}

}  // namespace cyclevc
