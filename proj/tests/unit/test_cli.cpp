// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "cyclevc/cli/cli.hpp"
#include "cyclevc/trainer/trainer.hpp"
#include "doctest.h"

using namespace cyclevc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run_cli(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

// Scratch directory removed at scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("cyclevc_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_files(const fs::path& root, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) n += e.is_regular_file() && e.path().extension() == ext;
  return n;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::vector<std::string> gen_args(const std::string& out, const std::string& speakers = "2") {
  return {"gen-corpus", "--speakers", speakers, "--train", "3", "--eval", "2", "--frames", "80", "--seed", "5",
          "--out", out};
}

// Keeps CLI training runs to a fraction of a second.
std::string small_config(const TempDir& dir) {
  const std::string path = dir / "small.json";
  std::ofstream(path) << R"({"batch_size": 2, "crop_frames": 16, "stage1_steps": 3,
    "arch": {"hidden": 8, "latent": 4, "kernel": 3, "encoder_blocks": 1, "decoder_blocks": 1, "critic_blocks": 1}})";
  return path;
}

}  // namespace

TEST_CASE("gen-corpus") {
  TempDir dir("gen");
  const Outcome a = run(gen_args(dir / "a"));
  REQUIRE(a.code == 0);
  CHECK(count_files(dir / "a", ".vcf") == 2 * (3 + 2));
  CHECK(fs::exists(dir.path / "a" / "manifest.txt"));
  REQUIRE(run(gen_args(dir / "b")).code == 0);
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path twin = dir.path / "b" / fs::relative(e.path(), dir.path / "a");
    CHECK(slurp(e.path()) == slurp(twin));
  }

  // VCF_SEED stands in for a missing --seed.
  ::setenv("VCF_SEED", "5", 1);
  std::vector<std::string> env_args = gen_args(dir / "c");
  env_args.erase(env_args.begin() + 9, env_args.begin() + 11);
  CHECK(run(env_args).code == 0);
  CHECK(slurp(dir.path / "a" / "spk0" / "train" / "spk0_t000.vcf").size() > 0);
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(dir.path / "c" / fs::relative(e.path(), dir.path / "a")));
  }
  ::setenv("VCF_SEED", "not-a-number", 1);
  CHECK(run(env_args).code == 2);
  ::unsetenv("VCF_SEED");

  CHECK(run({"gen-corpus", "--speakers", "0", "--out", dir / "d"}).code == 2);
  CHECK(run({"gen-corpus", "--noise", "-1", "--out", dir / "d"}).code == 2);
}

TEST_CASE("a one-speaker corpus trains only non-cycle variants") {
  TempDir dir("one");
  REQUIRE(run(gen_args(dir / "corpus", "1")).code == 0);
  const std::string cfg = small_config(dir);
  const Outcome cyc = run({"train", "--config", cfg, "--variant", "cyclevae-multi", "--corpus", dir / "corpus", "--out",
                           dir / "cyc"});
  CHECK(cyc.code == 2);
  CHECK(cyc.err.find("at least 2 speakers") != std::string::npos);
  CHECK(run({"train", "--config", cfg, "--variant", "vae", "--corpus", dir / "corpus", "--out", dir / "vae"}).code == 0);
}

TEST_CASE("train, convert and evaluate") {
  TempDir dir("pipeline");
  REQUIRE(run(gen_args(dir / "corpus", "3")).code == 0);
  const std::string cfg = small_config(dir);
  const std::string corpus = dir / "corpus";

  const Outcome t = run({"train", "--config", cfg, "--variant", "cyclevae-multi", "--corpus", corpus, "--out",
                         dir / "model"});
  REQUIRE(t.code == 0);
  for (const char* f : {"config.json", "checkpoint.vck", "loss_trace.csv"}) CHECK(fs::exists(dir.path / "model" / f));
  CHECK(count_lines(slurp(dir.path / "model" / "loss_trace.csv")) == 4);
  const auto resolved = nlohmann::json::parse(slurp(dir.path / "model" / "config.json"));
  CHECK(resolved.at("variant") == "cyclevae-multi");
  CHECK(resolved.at("stage1_steps") == 3);
  const std::string ckpt = dir / "model/checkpoint.vck";

  SUBCASE("flags override the config file") {
    REQUIRE(run({"train", "--config", cfg, "--variant", "vae", "--steps", "0", "--corpus", corpus, "--out",
                 dir / "zero"})
                .code == 0);
    CHECK(count_lines(slurp(dir.path / "zero" / "loss_trace.csv")) == 1);
    CHECK(nlohmann::json::parse(slurp(dir.path / "zero" / "config.json")).at("stage1_steps") == 0);
  }

  SUBCASE("config problems") {
    const std::string typo = dir / "typo.json";
    std::ofstream(typo) << R"({"stage1_step": 3})";
    const Outcome o = run({"train", "--config", typo, "--corpus", corpus, "--out", dir / "x"});
    CHECK(o.code == 2);
    CHECK(o.err.find("stage1_step") != std::string::npos);
    CHECK(run({"train", "--config", cfg, "--variant", "gan", "--corpus", corpus, "--out", dir / "x"}).code == 2);
    CHECK(run({"train", "--config", cfg, "--corpus", corpus}).code == 2);
    CHECK(run({"train", "--config", cfg, "--variant", "vae", "--stage2-steps", "4", "--corpus", corpus, "--out",
               dir / "x"})
              .code == 2);
  }

  SUBCASE("convert a file, a directory and the whole corpus") {
    const std::string file = dir / "corpus/spk0/eval/e000.vcf";
    REQUIRE(fs::exists(file));
    REQUIRE(run({"convert", "--checkpoint", ckpt, "--input", file, "--source", "spk0", "--target", "spk1", "--out",
                 dir / "one"})
                .code == 0);
    const FeatureSequence in = read_features(file);
    const FeatureSequence out = read_features(dir.path / "one" / "e000.vcf");
    CHECK(out.frames == in.frames);
    Checkpoint loaded = load(ckpt);
    const FeatureSequence direct = convert(loaded, in, "spk0", "spk1");
    CHECK(out.values == direct.values);

    CHECK(run({"convert", "--checkpoint", ckpt, "--input", dir / "corpus/spk1/eval", "--source", "spk1", "--target",
               "spk1", "--out", dir / "same"})
              .code == 0);
    CHECK(count_files(dir.path / "same", ".vcf") == 2);
    CHECK(run({"convert", "--checkpoint", ckpt, "--input", file, "--source", "spk0", "--target", "spk1", "--cycle",
               "--out", dir / "cyc"})
              .code == 0);
    CHECK(read_features(dir.path / "cyc" / "e000.vcf").values == cycle_convert(loaded, in, "spk0", "spk1").values);

    const Outcome unknown = run({"convert", "--checkpoint", ckpt, "--input", file, "--source", "spk0", "--target",
                                 "spk9", "--out", dir / "x"});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("spk9") != std::string::npos);
    CHECK(run({"convert", "--checkpoint", ckpt, "--variant", "vae", "--input", file, "--source", "spk0", "--target",
               "spk1", "--out", dir / "x"})
              .code == 2);
    CHECK(run({"convert", "--checkpoint", ckpt, "--variant", "cyclevaewgan-multi", "--input", file, "--source",
               "spk0", "--target", "spk1", "--out", dir / "x"})
              .code == 2);
    CHECK(run({"convert", "--checkpoint", ckpt, "--input", file, "--out", dir / "x"}).code == 2);

    REQUIRE(run({"convert", "--checkpoint", ckpt, "--corpus", corpus, "--out", dir / "all"}).code == 0);
    CHECK(count_files(dir.path / "all", ".vcf") == 3 * 2 * 2);
    const Outcome ev = run({"evaluate", "--reference", corpus, "--run", "1=" + (dir / "all"), "--variant",
                            "cyclevae-multi", "--out", dir / "report"});
    REQUIRE(ev.code == 0);
    const std::string report = slurp(dir.path / "report" / "report.csv");
    CHECK(report.rfind("pair,variant,seed,metric,value\n", 0) == 0);
    CHECK(report.find("Average,cyclevae-multi,1,MCD,") != std::string::npos);
    CHECK(slurp(dir.path / "report" / "summary.csv").rfind("pair,variant,metric,mean,std,runs\n", 0) == 0);
    CHECK(fs::exists(dir.path / "report" / "table.txt"));
    CHECK(fs::exists(dir.path / "report" / "gv_reference.csv"));
    CHECK(fs::exists(dir.path / "report" / "gv_cyclevae-multi.csv"));
  }

  SUBCASE("references scored against themselves") {
    fs::create_directories(dir.path / "self" / "spk0_to_spk1");
    for (const char* id : {"e000.vcf", "e001.vcf"}) {
      fs::copy_file(dir.path / "corpus" / "spk1" / "eval" / id, dir.path / "self" / "spk0_to_spk1" / id);
    }
    REQUIRE(run({"evaluate", "--reference", corpus, "--run", "3=" + (dir / "self"), "--out", dir / "r"}).code == 0);
    std::istringstream lines(slurp(dir.path / "r" / "report.csv"));
    std::string line;
    std::getline(lines, line);
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
      ++rows;
      CHECK(std::stod(line.substr(line.rfind(',') + 1)) == 0.0);
    }
    CHECK(rows == 4);

    fs::copy_file(dir.path / "corpus" / "spk1" / "eval" / "e000.vcf", dir.path / "self" / "spk0_to_spk1" / "zz.vcf");
    const Outcome missing = run({"evaluate", "--reference", corpus, "--run", "3=" + (dir / "self"), "--out", dir / "r"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("spk0_to_spk1/zz") != std::string::npos);
    CHECK(run({"evaluate", "--reference", corpus, "--run", "x=" + (dir / "self"), "--out", dir / "r"}).code == 2);
  }
}

TEST_CASE("experiment") {
  TempDir dir("experiment");
  REQUIRE(run(gen_args(dir / "corpus", "2")).code == 0);
  const Outcome o = run({"experiment", "--config", small_config(dir), "--variants", "vae,cyclevae-multi", "--seeds",
                         "1,2", "--corpus", dir / "corpus", "--out", dir / "exp"});
  REQUIRE(o.code == 0);
  for (const char* f : {"report.csv", "summary.csv", "table.txt", "gv_reference.csv", "gv_vae.csv",
                        "gv_cyclevae-multi.csv"}) {
    CHECK(fs::exists(dir.path / "exp" / f));
  }
  for (const char* run_dir : {"vae_seed1", "vae_seed2", "cyclevae-multi_seed1", "cyclevae-multi_seed2"}) {
    CHECK(fs::exists(dir.path / "exp" / "runs" / run_dir / "checkpoint.vck"));
  }
  const std::string report = slurp(dir.path / "exp" / "report.csv");
  std::size_t averages = 0;
  for (std::size_t at = report.find("\nAverage,"); at != std::string::npos; at = report.find("\nAverage,", at + 1)) {
    ++averages;
  }
  CHECK(averages == 2 * 2 * 2);  // variants x seeds x metrics
  CHECK(o.out.find("±") != std::string::npos);
  CHECK(run({"experiment", "--config", small_config(dir), "--variants", "vae,vq", "--corpus", dir / "corpus", "--out",
             dir / "x"})
            .code == 2);
}

TEST_CASE("usage") {
  const Outcome help = run({"train", "--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--lambda-cycle") != std::string::npos);
  CHECK(help.out.find("2000") != std::string::npos);
  CHECK(help.out.find("cyclevae-multi") != std::string::npos);
  CHECK(run({"--help"}).out.find("gen-corpus") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"train", "--bogus"}).code == 2);
  CHECK(run({"transmogrify"}).code == 2);
  CHECK(run({"convert", "--input", "x.vcf"}).code == 2);
}
