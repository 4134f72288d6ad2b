// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "cyclevc/trainer/trainer.hpp"

namespace cyclevc {

EvaluationResult evaluate_checkpoint(Checkpoint& ckpt, const Corpus& corpus, const std::string& variant,
                                     std::uint64_t seed) {
  struct Sums {
    double mcd = 0.0;
    double msd = 0.0;
    std::size_t count = 0;
  };
  std::map<std::string, Sums> sums;
  EvaluationResult result;
  for (std::size_t s = 0; s < ckpt.speaker_ids.size(); ++s) {
    const std::size_t cs = corpus.speaker_index(ckpt.speaker_ids[s]);
    for (std::size_t t = 0; t < ckpt.speaker_ids.size(); ++t) {
      if (s == t) continue;
      const std::size_t ct = corpus.speaker_index(ckpt.speaker_ids[t]);
      Sums& acc = sums[pair_label(ckpt.speaker_groups[s], ckpt.speaker_groups[t])];
      for (std::size_t e = 0; e < corpus.eval[cs].size(); ++e) {
        FeatureSequence out = convert(ckpt, corpus.eval[cs][e], ckpt.speaker_ids[s], ckpt.speaker_ids[t]);
        const FeatureSequence& ref = corpus.eval[ct][e];
        acc.mcd += mcd(out, ref);
        acc.msd += msd(out, ref);
        acc.count += 1;
        result.converted.push_back(std::move(out));
      }
    }
  }
  for (const std::string& pair : pair_rows()) {
    auto it = sums.find(pair);
    if (it == sums.end() || it->second.count == 0) continue;
    const double n = static_cast<double>(it->second.count);
    result.records.push_back({pair, variant, seed, "MCD", it->second.mcd / n});
    result.records.push_back({pair, variant, seed, "MSD", it->second.msd / n});
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentOptions& options, const Corpus& corpus) {
  if (options.seeds.empty()) throw ConfigError("an experiment needs at least one seed");
  if (options.variants.empty()) throw ConfigError("an experiment needs at least one variant");

  struct Job {
    Variant variant;
    std::uint64_t seed;
    EvaluationResult eval;
    std::exception_ptr error;
  };
  std::vector<Job> jobs;
  for (Variant v : options.variants) {
    for (std::uint64_t s : options.seeds) jobs.push_back({v, s, {}, nullptr});
  }
  // Fail on configuration problems before any job starts.
  for (const auto& job : jobs) {
    TrainConfig c = options.base;
    c.variant = job.variant;
    c.lambda_wgan.reset();
    c.lambda_cycle.reset();
    if (!uses_wgan(job.variant)) c.stage2_steps.reset();
    c.validate();
  }

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        TrainConfig c = options.base;
        c.variant = job.variant;
        c.seed = job.seed;
        c.lambda_wgan.reset();
        c.lambda_cycle.reset();
        if (!uses_wgan(job.variant)) c.stage2_steps.reset();
        if (options.log) {
          std::lock_guard lock(mutex);
          options.log(std::string("training ") + to_string(job.variant) + " seed " + std::to_string(job.seed));
        }
        TrainResult trained = train(c, corpus);
        job.eval = evaluate_checkpoint(trained.checkpoint, corpus, to_string(job.variant), job.seed);
        std::lock_guard lock(mutex);
        if (options.on_trained) options.on_trained(job.variant, job.seed, trained);
        if (options.log) {
          options.log(std::string("finished ") + to_string(job.variant) + " seed " + std::to_string(job.seed));
        }
      } catch (...) {
        job.error = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& job : jobs) {
    if (job.error) std::rethrow_exception(job.error);
  }

  ExperimentResult result;
  std::vector<MetricRecord> records;
  std::map<std::string, std::vector<FeatureSequence>> converted;
  for (auto& job : jobs) {
    records.insert(records.end(), job.eval.records.begin(), job.eval.records.end());
    auto& pool = converted[to_string(job.variant)];
    for (auto& seq : job.eval.converted) pool.push_back(std::move(seq));
  }
  result.records = with_average_rows(records);
  result.summary = summarize(result.records);

  std::vector<FeatureSequence> reference;
  for (const auto& per_speaker : corpus.eval) reference.insert(reference.end(), per_speaker.begin(), per_speaker.end());
  result.gv["reference"] = global_variance(reference);
  for (const auto& [name, seqs] : converted) result.gv[name] = global_variance(seqs);
  return result;
}

}  // namespace cyclevc
