/*
 * Copyright 2026 The factorlab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "factorlab/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "factorlab/config.hpp"
#include "factorlab/error.hpp"
#include "factorlab/harness.hpp"
#include "factorlab/report.hpp"
#include "factorlab/rng.hpp"

namespace factorlab {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Dotted override key=value (repeatable)")->take_all();
  cmd->add_option("--out", c.out, std::string("Output directory (default $") + kOutEnv + " or ./factorlab_out)");
  cmd->add_option("--seed", c.seed, "Experiment seed");
}

fs::path output_root(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv(kOutEnv); env != nullptr && *env != '\0') return env;
  return "factorlab_out";
}

ExperimentConfig resolve(const Common& c) {
  auto overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  return load_experiment_config(c.config, overrides);
}

void print_selection(const EvalReport& report, std::ostream& out) {
  for (const auto& [factor, sel] : report.acai) out << factor << ": " << sel.label << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"factorlab: discover sensitive factors with a controllable generator and test interventions"};
  app.require_subcommand(1, 1);

  struct Verb {
    const char* name;
    const char* help;
    Stage until;
  };
  const Verb verbs[] = {
      {"datagen", "Generate the train/val/test factor-world splits", Stage::kData},
      {"train-gan", "Train the InfoGAN (or bind the oracle generator)", Stage::kGenerator},
      {"train-baseline", "Train the baseline classifier", Stage::kBaseline},
      {"scan", "Rank generator codes by baseline accuracy gap", Stage::kScan},
      {"intervene", "Train DA/AA/SC classifiers for the examined codes", Stage::kInterventions},
      {"evaluate", "Evaluate all settings and write report.json", Stage::kEvaluate},
      {"acai", "Evaluate and print the ACAI selection per real factor", Stage::kEvaluate},
      {"run-all", "Run every stage and emit tables and figures", Stage::kReport},
  };
  Common common;
  std::vector<std::pair<CLI::App*, const Verb*>> commands;
  for (const auto& v : verbs) {
    CLI::App* cmd = app.add_subcommand(v.name, v.help);
    add_common(cmd, common);
    commands.emplace_back(cmd, &v);
  }
  std::string from;
  CLI::App* report_cmd = app.add_subcommand("report", "Regenerate tables and figures from a finished run");
  report_cmd->add_option("--from", from, "Run directory (or its report.json)")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInput;
  }

  try {
    if (report_cmd->parsed()) {
      fs::path dir = from;
      if (fs::is_regular_file(dir)) dir = dir.parent_path();
      const fs::path run_root = fs::exists(dir / "report" / "report.json") ? dir : dir.parent_path();
      const fs::path report_dir = fs::exists(dir / "report" / "report.json") ? dir / "report" : dir;
      const EvalReport report = load_report(report_dir);
      GeneratorHandle gen;
      const fs::path gen_path = run_root / "generator" / "generator.ckpt";
      if (fs::exists(gen_path)) gen = load_generator(gen_path);
      ExperimentConfig cfg;
      if (report.config.is_object() && !report.config.empty()) cfg = report.config.get<ExperimentConfig>();
      const auto files = emit_report(report, report_dir, gen.get(), cfg.traversal_steps, cfg.traversal_images,
                                     derive_seed(cfg.seed, 0, salt::kTraversal));
      for (const auto& f : files) out << f.string() << "\n";
      return kExitOk;
    }
    for (const auto& [cmd, verb] : commands) {
      if (!cmd->parsed()) continue;
      Experiment exp(resolve(common), output_root(common));
      RunOptions options;
      options.until = verb->until;
      options.log = [&err](const std::string& line) { err << "[factorlab] " << line << "\n"; };
      const EvalReport report = exp.run(options);
      if (std::string(verb->name) == "acai") print_selection(report, out);
      if (verb->until >= Stage::kEvaluate) out << (exp.report_dir() / "report.json").string() << "\n";
      return kExitOk;
    }
  } catch (const StageError& e) {
    err << "error: stage " << e.what() << "\n";
    return e.input_error() ? kExitInput : kExitRuntime;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitInput;
}

}  // namespace factorlab
