// Copyright 2026 The msaasr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// msaasr command-line front end.
//
//   msaasr synth  --config C [--run DIR]
//   msaasr train  --config C [--run DIR]
//   msaasr infer  --config C RECORDING [--gold-tokens [FILE]] [--num-speakers K]
//   msaasr eval   --config C                 (held-out evaluation of the run)
//   msaasr eval   REF.json HYP.json          (score two transcript files)
//   msaasr verify [--suite NAME]... [--inject-fault l3-sign]
//
// Exit codes: 0 ok, 1 verification failed, 2 config/usage error,
// 3 data error, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msaasr/error.hpp"
#include "msaasr/experiment_config.hpp"
#include "msaasr/harness.hpp"
#include "msaasr/verify/battery.hpp"

namespace fs = std::filesystem;
using namespace msaasr;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kNumeric:
      return 4;
    default:
      return 3;
  }
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::string out;
  bool json = false;
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg =
      c.config.empty() ? parse_config("", "<defaults>") : load_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  if (!c.run_dir.empty()) cfg.out_dir = c.run_dir;
  cfg.validate();
  return cfg;
}

void emit(const Common& c, const std::string& json_text, const std::string& human) {
  if (!c.out.empty()) {
    const fs::path p(c.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + c.out);
    out << json_text << '\n';
  }
  std::cout << (c.json ? json_text : human) << std::endl;
}

void add_common(CLI::App* app, Common& c, bool with_seed = true) {
  app->add_option("--config", c.config, "Experiment config (key = value)");
  if (with_seed) app->add_option("--seed", c.seed, "Override the experiment seed");
  app->add_option("--run", c.run_dir, "Run directory (overrides paths.out_dir)");
  app->add_option("--out", c.out, "Also write the JSON result to this file");
  app->add_flag("--json", c.json, "Print JSON on stdout");
}

std::string pretty_metrics(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "gold tokens:    accuracy %.4f  cpWER %.4f  K exact %.3f\n"
                "decoded tokens: accuracy %.4f  cpWER %.4f\n"
                "gold, true K:   accuracy %.4f  cpWER %.4f\n"
                "config %s  model %s",
                j["gold"]["accuracy"].get<double>(), j["gold"]["cpwer"].get<double>(),
                j["gold"]["k_exact"].get<double>(), j["decoded"]["accuracy"].get<double>(),
                j["decoded"]["cpwer"].get<double>(), j["gold_oracle_k"]["accuracy"].get<double>(),
                j["gold_oracle_k"]["cpwer"].get<double>(),
                j["config_hash"].get<std::string>().c_str(),
                j["model_hash"].get<std::string>().c_str());
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speaker-attributed ASR with a weakly supervised speaker module"};
  app.require_subcommand(1);

  Common synth_c, train_c, infer_c, eval_c, verify_c;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus and eval set");
  add_common(synth, synth_c);

  auto* train = app.add_subcommand("train", "Train the speaker module");
  add_common(train, train_c);

  auto* infer = app.add_subcommand("infer", "Attribute the tokens of one recording");
  add_common(infer, infer_c);
  InferRequest req;
  std::string gold_file;
  std::string checkpoint;
  std::optional<std::size_t> num_speakers;
  infer->add_option("recording", req.recording, "Eval recording id or feature file base")->required();
  auto* gold_opt = infer->add_option("--gold-tokens", gold_file,
                                     "Use gold tokens (from the eval set, or a JSON array FILE)")
                       ->expected(0, 1);
  infer->add_option("--num-speakers", num_speakers, "Fix the number of speakers")
      ->check(CLI::PositiveNumber);
  infer->add_option("--checkpoint", checkpoint, "Checkpoint (default: <run>/model.msas)");

  auto* eval = app.add_subcommand("eval", "Score transcripts (cpWER)");
  add_common(eval, eval_c);
  std::vector<std::string> eval_files;
  eval->add_option("files", eval_files, "REF.json HYP.json")->expected(0, 2);

  auto* verify = app.add_subcommand("verify", "Run the verification battery");
  add_common(verify, verify_c, false);
  std::vector<std::string> suites;
  std::string fault;
  verify->add_option("--suite", suites, "Run only these suites");
  verify->add_option("--inject-fault", fault, "Deliberately break a gradient (l3-sign)")
      ->check(CLI::IsMember({"l3-sign"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const auto cfg = resolve_config(synth_c);
      const std::string text = cmd_synth(cfg, RunPaths{cfg.out_dir});
      const auto j = nlohmann::json::parse(text);
      emit(synth_c, text,
           "wrote " + std::to_string(j["turns"].get<std::size_t>()) + " turns, " +
               std::to_string(j["samples"].get<std::size_t>()) + " samples, " +
               std::to_string(j["recordings"].get<std::size_t>()) + " eval recordings to " +
               (cfg.out_dir / "data").string() + " (corpus " + j["corpus_hash"].get<std::string>() + ")");
    } else if (train->parsed()) {
      const auto cfg = resolve_config(train_c);
      const std::string text = cmd_train(cfg, RunPaths{cfg.out_dir}, [&](const std::string& line) {
        std::cerr << line << std::endl;
      });
      const auto j = nlohmann::json::parse(text);
      emit(train_c, text,
           "trained " + std::to_string(j["steps"].get<std::int64_t>()) + " steps in " +
               std::to_string(j["seconds"].get<double>()) + " s; checkpoint " +
               (cfg.out_dir / "model.msas").string() + " (model " + j["model_hash"].get<std::string>() + ")");
    } else if (infer->parsed()) {
      const auto cfg = resolve_config(infer_c);
      req.gold_tokens = gold_opt->count() > 0;
      if (!gold_file.empty()) req.gold_tokens_file = gold_file;
      req.num_speakers = num_speakers;
      req.checkpoint = checkpoint;
      const std::string text = cmd_infer(cfg, RunPaths{cfg.out_dir}, req);
      emit(infer_c, text, text);
    } else if (eval->parsed()) {
      if (eval_files.size() == 2) {
        const std::string text = cmd_eval_files(eval_files[0], eval_files[1]);
        const auto j = nlohmann::json::parse(text);
        char buf[160];
        std::snprintf(buf, sizeof buf, "cpWER %.4f (%zu errors / %zu words: S %zu I %zu D %zu)",
                      j["cpwer"].get<double>(),
                      j["substitutions"].get<std::size_t>() + j["insertions"].get<std::size_t>() +
                          j["deletions"].get<std::size_t>(),
                      j["reference_words"].get<std::size_t>(), j["substitutions"].get<std::size_t>(),
                      j["insertions"].get<std::size_t>(), j["deletions"].get<std::size_t>());
        emit(eval_c, text, buf);
      } else {
        require(eval_files.empty(), ErrorKind::kConfig, "eval takes either no files or REF and HYP");
        const auto cfg = resolve_config(eval_c);
        const std::string text = cmd_eval_run(cfg, RunPaths{cfg.out_dir});
        emit(eval_c, text, pretty_metrics(text));
      }
    } else if (verify->parsed()) {
      verify::VerifyOptions opts;
      opts.inject_l3_sign_flip = fault == "l3-sign";
      const auto results = verify::run_verify(opts, suites);
      std::string human;
      bool all = true;
      for (const auto& r : results) {
        all = all && r.passed;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-4s %-15s %7.2f s  ", r.passed ? "PASS" : "FAIL",
                      r.name.c_str(), r.seconds);
        human += buf + r.detail + "\n";
      }
      human += all ? "all suites passed" : "some suites FAILED";
      emit(verify_c, verify::verify_report_json(results), human);
      return all ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << std::endl;
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error (data): " << e.what() << std::endl;
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << std::endl;
    return 3;
  }
  return 0;
}
