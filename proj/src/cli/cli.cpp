// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include "cyclevc/cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "cyclevc/trainer/trainer.hpp"
#include "cyclevc/verify/verify.hpp"

namespace cyclevc {
namespace {

namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

std::uint64_t env_seed(std::uint64_t fallback) {
  const char* v = std::getenv("VCF_SEED");
  if (v == nullptr || *v == '\0') return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw UsageError(std::string("VCF_SEED is not an unsigned integer: '") + v + "'");
  }
}

nlohmann::json read_config(const std::string& path, const std::vector<std::string>& extra_keys) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");
  std::vector<std::string> allowed = train_config_keys();
  allowed.insert(allowed.end(), extra_keys.begin(), extra_keys.end());
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw UsageError("unknown key '" + key + "' in config file " + path);
    }
  }
  return j;
}

// Splits off the non-training keys of a config file.
nlohmann::json take(nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) return nullptr;
  nlohmann::json v = j[key];
  j.erase(key);
  return v;
}

template <typename V>
void override_if(const CLI::Option* opt, const V& value, V& target) {
  if (opt->count() > 0) target = value;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<fs::path> vcf_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".vcf") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Training flags shared by `train` and `experiment`.
struct TrainFlags {
  std::string config;
  std::string variant;
  std::size_t steps = 2000;
  std::size_t stage2 = 2000;
  std::size_t critic_steps = 5;
  double clip = 0.01;
  double lambda_wgan = 0.0;
  double lambda_cycle = 1.0;
  std::size_t batch = 8;
  std::size_t crop = 128;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::vector<std::string> speakers;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* cmd, bool with_variant) {
    opts["config"] = cmd->add_option("--config", config, "JSON config file; flags override its values");
    if (with_variant) opts["variant"] = cmd->add_option("--variant", variant, "Model variant")->default_str("cyclevae-multi");
    opts["steps"] = cmd->add_option("--steps", steps, "Stage-1 (non-adversarial) steps");
    opts["stage2"] = cmd->add_option("--stage2-steps", stage2, "Stage-2 (adversarial) steps; adversarial variants only");
    opts["critic"] = cmd->add_option("--critic-steps", critic_steps, "Critic updates per generator update");
    opts["clip"] = cmd->add_option("--clip", clip, "Critic weight clipping bound");
    if (with_variant) {
      opts["lw"] = cmd->add_option("--lambda-wgan", lambda_wgan, "Adversarial weight (variant preset when omitted)")
                       ->default_str("preset");
      opts["lc"] = cmd->add_option("--lambda-cycle", lambda_cycle, "Cycle weight (variant preset when omitted)")
                       ->default_str("preset");
    }
    opts["batch"] = cmd->add_option("--batch-size", batch, "Crops per batch");
    opts["crop"] = cmd->add_option("--crop", crop, "Frames per crop");
    opts["lr"] = cmd->add_option("--lr", lr, "Adam learning rate");
    if (with_variant) {
      opts["seed"] = cmd->add_option("--seed", seed, "Random seed (falls back to VCF_SEED)");
      opts["speakers"] = cmd->add_option("--speakers", speakers, "Comma-separated speaker subset")
                             ->delimiter(',')
                             ->default_str("all");
    }
  }

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  // Config file first, then flags, then the VCF_SEED fallback for the seed.
  TrainConfig resolve(nlohmann::json file) const {
    TrainConfig c;
    try {
      c = file.get<TrainConfig>();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    const bool seed_in_file = file.contains("seed");
    if (given("variant")) c.variant = parse_variant(variant);
    if (given("steps")) c.stage1_steps = steps;
    if (given("stage2")) c.stage2_steps = stage2;
    if (given("critic")) c.critic_steps = critic_steps;
    if (given("clip")) c.clip_c = clip;
    if (given("lw")) c.lambda_wgan = lambda_wgan;
    if (given("lc")) c.lambda_cycle = lambda_cycle;
    if (given("batch")) c.batch_size = batch;
    if (given("crop")) c.crop_frames = crop;
    if (given("lr")) c.adam.lr = lr;
    if (given("speakers")) c.speakers = speakers;
    if (given("seed")) {
      c.seed = seed;
    } else if (!seed_in_file) {
      c.seed = env_seed(c.seed);
    }
    return c;
  }
};

std::string required_path(const std::string& flag_value, const nlohmann::json& file_value, const char* name) {
  if (!flag_value.empty()) return flag_value;
  if (file_value.is_string()) return file_value.get<std::string>();
  throw UsageError(std::string("--") + name + " is required");
}

// `records` already carry their Average rows.
void write_evaluation(const fs::path& out, const std::vector<MetricRecord>& records,
                      const std::map<std::string, GvProfile>& gv, std::ostream& log) {
  fs::create_directories(out);
  const std::vector<MetricRecord>& all = records;
  const std::vector<SummaryRow> summary = summarize(all);
  std::ostringstream report, table, summary_csv;
  write_report_csv(report, all);
  write_summary_csv(summary_csv, summary);
  write_text(out / "report.csv", report.str());
  write_text(out / "summary.csv", summary_csv.str());
  write_text(out / "table.txt", format_table(summary));
  for (const auto& [name, profile] : gv) {
    std::ostringstream g;
    write_gv_csv(g, profile);
    write_text(out / ("gv_" + name + ".csv"), g.str());
  }
  log << format_table(summary);
  for (const auto& [name, profile] : gv) log << "GV " << name << ": " << profile.average << "\n";
}

int cmd_gen_corpus(const CorpusOptions& given, const CLI::Option* seed_opt, const std::string& out, std::ostream& log) {
  CorpusOptions o = given;
  if (seed_opt->count() == 0) o.seed = env_seed(o.seed);
  Corpus corpus = generate_corpus(o);
  write_corpus(corpus, out);
  log << "wrote " << o.speakers * (o.train_per_speaker + o.eval_per_speaker) << " feature files for " << o.speakers
      << " speakers to " << out << " (seed " << o.seed << ")\n";
  return kExitOk;
}

int cmd_train(const TrainFlags& flags, const std::string& corpus_flag, const std::string& out_flag, std::ostream& log) {
  nlohmann::json file = flags.config.empty() ? nlohmann::json::object() : read_config(flags.config, {"corpus", "out"});
  const nlohmann::json corpus_value = take(file, "corpus");
  const nlohmann::json out_value = take(file, "out");
  const fs::path corpus_dir = required_path(corpus_flag, corpus_value, "corpus");
  const fs::path out = required_path(out_flag, out_value, "out");
  const TrainConfig config = flags.resolve(file);
  config.validate();

  const Corpus corpus = load_corpus(corpus_dir);
  fs::create_directories(out);
  nlohmann::json resolved = config;
  write_text(out / "config.json", resolved.dump(2) + "\n");
  try {
    TrainResult result = train(config, corpus);
    save(result.checkpoint, out / "checkpoint.vck");
    write_text(out / "loss_trace.csv", result.trace.csv());
    const auto& e = result.trace.entries;
    log << "trained " << to_string(config.variant) << " for " << e.size() << " steps";
    if (!e.empty()) log << ", final loss " << e.back().total;
    log << "\n";
  } catch (const TrainingDiverged& d) {
    write_text(out / "loss_trace.csv", d.trace().csv());
    throw;
  }
  return kExitOk;
}

int cmd_convert(const std::string& checkpoint, const std::string& variant, const std::string& input,
                const std::string& corpus_dir, const std::string& source, const std::string& target, bool cycle,
                const std::string& out_dir, std::ostream& log) {
  const bool check_variant = !variant.empty() && variant != "any";
  std::optional<DecoderMode> expected;
  if (check_variant) expected = decoder_mode(parse_variant(variant));
  Checkpoint ckpt = load(checkpoint, expected);
  if (check_variant && to_string(ckpt.config.variant) != variant) {
    throw VariantMismatchError(std::string("checkpoint was trained as ") + to_string(ckpt.config.variant) +
                               ", not " + variant);
  }
  const fs::path out = out_dir;
  fs::create_directories(out);
  auto run = [&](const FeatureSequence& x, const std::string& s, const std::string& t) {
    return cycle ? cycle_convert(ckpt, x, s, t) : convert(ckpt, x, s, t);
  };

  if (!corpus_dir.empty()) {
    if (!input.empty()) throw UsageError("--input and --corpus are mutually exclusive");
    const Corpus corpus = load_corpus(corpus_dir);
    std::size_t count = 0;
    for (const auto& s : ckpt.speaker_ids) {
      const std::size_t cs = corpus.speaker_index(s);
      for (const auto& t : ckpt.speaker_ids) {
        if (s == t) continue;
        const fs::path dir = out / (s + "_to_" + t);
        fs::create_directories(dir);
        for (const auto& utt : corpus.eval[cs]) {
          write_features(run(utt, s, t), dir / (utt.utterance_id + ".vcf"));
          ++count;
        }
      }
    }
    log << "converted " << count << " evaluation utterances\n";
    return kExitOk;
  }

  if (input.empty()) throw UsageError("either --input or --corpus is required");
  if (source.empty() || target.empty()) throw UsageError("--source and --target are required with --input");
  ckpt.speaker_index(source);
  ckpt.speaker_index(target);
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    files = vcf_files(input);
  } else if (fs::exists(input)) {
    files.push_back(input);
  } else {
    throw UsageError("input " + input + " does not exist");
  }
  for (const auto& f : files) {
    FeatureSequence x = read_features(f, ckpt.config.arch.feature_dim);
    write_features(run(x, source, target), out / f.filename());
  }
  log << "converted " << files.size() << " file(s) from " << source << " to " << target << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& reference, const std::vector<std::string>& runs, const std::string& variant,
                 const std::string& out, std::ostream& log) {
  const Corpus corpus = load_corpus(reference);
  std::vector<MetricRecord> records;
  std::vector<FeatureSequence> converted;
  std::vector<std::string> missing;
  for (const auto& spec : runs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--run expects SEED=DIR, got '" + spec + "'");
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(spec.substr(0, eq));
    } catch (const std::exception&) {
      throw UsageError("--run seed is not an unsigned integer: '" + spec + "'");
    }
    const fs::path dir = spec.substr(eq + 1);
    if (!fs::is_directory(dir)) throw UsageError("run directory " + dir.string() + " does not exist");

    struct Sums {
      double mcd = 0.0, msd = 0.0;
      std::size_t n = 0;
    };
    std::map<std::string, Sums> sums;
    std::vector<fs::path> pair_dirs;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory()) pair_dirs.push_back(e.path());
    }
    std::sort(pair_dirs.begin(), pair_dirs.end());
    for (const auto& pd : pair_dirs) {
      const std::string name = pd.filename().string();
      const auto sep = name.find("_to_");
      if (sep == std::string::npos) throw UsageError("run directory entry '" + name + "' is not SOURCE_to_TARGET");
      const std::size_t s = corpus.speaker_index(name.substr(0, sep));
      const std::size_t t = corpus.speaker_index(name.substr(sep + 4));
      Sums& acc = sums[pair_label(corpus.speakers[s].group, corpus.speakers[t].group)];
      for (const auto& f : vcf_files(pd)) {
        const std::string id = f.stem().string();
        const auto& refs = corpus.eval[t];
        const auto it = std::find_if(refs.begin(), refs.end(), [&](const FeatureSequence& r) { return r.utterance_id == id; });
        if (it == refs.end()) {
          missing.push_back(name + "/" + id);
          continue;
        }
        FeatureSequence x = read_features(f, corpus.dim);
        acc.mcd += mcd(x, *it);
        acc.msd += msd(x, *it);
        acc.n += 1;
        converted.push_back(std::move(x));
      }
    }
    for (const auto& pair : pair_rows()) {
      auto it = sums.find(pair);
      if (it == sums.end() || it->second.n == 0) continue;
      records.push_back({pair, variant, seed, "MCD", it->second.mcd / static_cast<double>(it->second.n)});
      records.push_back({pair, variant, seed, "MSD", it->second.msd / static_cast<double>(it->second.n)});
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw UsageError("no parallel reference for:" + list);
  }
  if (records.empty()) throw UsageError("no converted utterances found");
  std::vector<FeatureSequence> refs;
  for (const auto& per : corpus.eval) refs.insert(refs.end(), per.begin(), per.end());
  std::map<std::string, GvProfile> gv{{"reference", global_variance(refs)}, {variant, global_variance(converted)}};
  write_evaluation(out, with_average_rows(records), gv, log);
  return kExitOk;
}

int cmd_experiment(const TrainFlags& flags, const std::string& corpus_flag, const std::string& out_flag,
                   const std::vector<std::string>& variants, const CLI::Option* variants_opt,
                   const std::vector<std::uint64_t>& seeds, const CLI::Option* seeds_opt, std::size_t jobs,
                   const CLI::Option* jobs_opt, std::ostream& log) {
  nlohmann::json file = flags.config.empty() ? nlohmann::json::object()
                                             : read_config(flags.config, {"corpus", "out", "variants", "seeds", "jobs"});
  const nlohmann::json corpus_value = take(file, "corpus");
  const nlohmann::json out_value = take(file, "out");
  const nlohmann::json file_variants = take(file, "variants");
  const nlohmann::json file_seeds = take(file, "seeds");
  const nlohmann::json file_jobs = take(file, "jobs");
  const fs::path corpus_dir = required_path(corpus_flag, corpus_value, "corpus");
  const fs::path out = required_path(out_flag, out_value, "out");

  ExperimentOptions options;
  options.base = flags.resolve(file);
  std::vector<std::string> names = variants;
  std::vector<std::uint64_t> seed_list = seeds;
  options.jobs = jobs;
  try {
    if (variants_opt->count() == 0 && !file_variants.is_null()) names = file_variants.get<std::vector<std::string>>();
    if (seeds_opt->count() == 0 && !file_seeds.is_null()) seed_list = file_seeds.get<std::vector<std::uint64_t>>();
    if (jobs_opt->count() == 0 && !file_jobs.is_null()) options.jobs = file_jobs.get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad experiment setting in config: ") + e.what());
  }
  for (const auto& n : names) options.variants.push_back(parse_variant(n));
  options.seeds = seed_list;
  options.log = [&](const std::string& line) { log << line << "\n" << std::flush; };
  options.on_trained = [&](Variant v, std::uint64_t seed, TrainResult& r) {
    const fs::path dir = out / "runs" / (std::string(to_string(v)) + "_seed" + std::to_string(seed));
    fs::create_directories(dir);
    save(r.checkpoint, dir / "checkpoint.vck");
    write_text(dir / "loss_trace.csv", r.trace.csv());
  };

  const Corpus corpus = load_corpus(corpus_dir);
  fs::create_directories(out);
  const ExperimentResult result = run_experiment(options, corpus);
  write_evaluation(out, result.records, result.gv, log);
  return kExitOk;
}

int cmd_verify(std::uint64_t seed, const CLI::Option* seed_opt, std::size_t trials, std::ostream& log) {
  VerifyOptions o;
  o.seed = seed_opt->count() > 0 ? seed : env_seed(o.seed);
  o.gradient_trials = trials;
  const std::vector<CheckResult> results = run_battery(o);
  print_results(log, results);
  const auto failed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return !r.passed; });
  log << (failed == 0 ? "all " + std::to_string(results.size()) + " checks passed"
                      : std::to_string(failed) + " of " + std::to_string(results.size()) + " checks failed")
      << "\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Many-to-many voice conversion toolkit on mel-cepstral features", "cyclevc"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  CorpusOptions corpus_options;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic multi-speaker feature corpus");
  gen->add_option("--speakers", corpus_options.speakers, "Number of speakers");
  gen->add_option("--train", corpus_options.train_per_speaker, "Training utterances per speaker");
  gen->add_option("--eval", corpus_options.eval_per_speaker, "Parallel evaluation utterances per speaker");
  gen->add_option("--frames", corpus_options.frames, "Frames per utterance");
  auto* gen_seed = gen->add_option("--seed", corpus_options.seed, "Random seed (falls back to VCF_SEED)");
  gen->add_option("--noise", corpus_options.noise, "Additive noise standard deviation");
  gen->add_option("--out", gen_out, "Output corpus directory")->required();

  TrainFlags train_flags;
  std::string train_corpus, train_out;
  auto* tr = app.add_subcommand("train", "Train one model variant");
  train_flags.add(tr, true);
  tr->add_option("--corpus", train_corpus, "Corpus directory");
  tr->add_option("--out", train_out, "Output directory for checkpoint.vck and loss_trace.csv");

  std::string conv_ckpt, conv_variant, conv_input, conv_corpus, conv_source, conv_target, conv_out;
  bool conv_cycle = false;
  auto* cv = app.add_subcommand("convert", "Convert feature files with a trained model");
  cv->add_option("--checkpoint", conv_ckpt, "Checkpoint file")->required();
  cv->add_option("--variant", conv_variant, "Expected variant of the checkpoint")->default_str("any");
  cv->add_option("--input", conv_input, "Feature file or directory of .vcf files");
  cv->add_option("--corpus", conv_corpus, "Convert every evaluation utterance of this corpus for every speaker pair");
  cv->add_option("--source", conv_source, "Source speaker id");
  cv->add_option("--target", conv_target, "Target speaker id");
  cv->add_flag("--cycle", conv_cycle, "Convert to the target and back to the source");
  cv->add_option("--out", conv_out, "Output directory")->required();

  std::string eval_reference, eval_variant = "model", eval_out;
  std::vector<std::string> eval_runs;
  auto* ev = app.add_subcommand("evaluate", "Score converted utterances against parallel references");
  ev->add_option("--reference", eval_reference, "Corpus directory holding the parallel references")->required();
  ev->add_option("--run", eval_runs, "SEED=DIR with DIR/<source>_to_<target>/<id>.vcf; repeatable")->required();
  ev->add_option("--variant", eval_variant, "Variant label for the report");
  ev->add_option("--out", eval_out, "Output directory for the report")->required();

  TrainFlags exp_flags;
  std::string exp_corpus, exp_out;
  std::vector<std::string> exp_variants = {"vae", "cyclevae-multi"};
  std::vector<std::uint64_t> exp_seeds = {1, 2, 3};
  std::size_t exp_jobs = 1;
  auto* ex = app.add_subcommand("experiment", "Train, convert and score several variants over several seeds");
  exp_flags.add(ex, false);
  ex->add_option("--corpus", exp_corpus, "Corpus directory");
  ex->add_option("--out", exp_out, "Output directory");
  auto* exp_variants_opt = ex->add_option("--variants", exp_variants, "Comma-separated variants")->delimiter(',');
  auto* exp_seeds_opt = ex->add_option("--seeds", exp_seeds, "Comma-separated seeds")->delimiter(',');
  auto* exp_jobs_opt = ex->add_option("--jobs", exp_jobs, "Parallel training jobs");

  std::uint64_t verify_seed = VerifyOptions{}.seed;
  std::size_t verify_trials = VerifyOptions{}.gradient_trials;
  auto* vf = app.add_subcommand("verify", "Run the built-in numerical verification battery");
  auto* verify_seed_opt = vf->add_option("--seed", verify_seed, "Random seed (falls back to VCF_SEED)");
  vf->add_option("--trials", verify_trials, "Random trials per gradient check")->check(CLI::Range(1, 1000));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_corpus(corpus_options, gen_seed, gen_out, out);
    if (*tr) return cmd_train(train_flags, train_corpus, train_out, out);
    if (*cv) {
      return cmd_convert(conv_ckpt, conv_variant, conv_input, conv_corpus, conv_source, conv_target, conv_cycle,
                         conv_out, out);
    }
    if (*ev) return cmd_evaluate(eval_reference, eval_runs, eval_variant, eval_out, out);
    if (*ex) {
      return cmd_experiment(exp_flags, exp_corpus, exp_out, exp_variants, exp_variants_opt, exp_seeds, exp_seeds_opt,
                            exp_jobs, exp_jobs_opt, out);
    }
    if (*vf) return cmd_verify(verify_seed, verify_seed_opt, verify_trials, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnknownSpeakerError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const VariantMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cyclevc
