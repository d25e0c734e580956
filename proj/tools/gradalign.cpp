// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "gradalign/errors.hpp"
#include "gradalign/experiments.hpp"
#include "gradalign/gradcheck.hpp"
#include "gradalign/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

struct Options {
  std::string config_path;
  std::string out_dir;
  int seeds = 0;
  bool plot = false;
  int threads = 1;
  bool timing = false;
};

gradalign::ExperimentConfig resolve_config(const Options& opts) {
  gradalign::ExperimentConfig cfg =
      opts.config_path.empty() ? gradalign::config_from_json("{}") : gradalign::load_config(opts.config_path);
  if (opts.seeds > 0) {
    cfg.seeds.clear();
    for (int s = 1; s <= opts.seeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (const char* env = std::getenv("GRADALIGN_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      cfg.master_seed = std::stoull(env, &used, 10);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw gradalign::ConfigError(std::string("GRADALIGN_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  try {
    cfg.finalize();
  } catch (const gradalign::ConfigError&) {
    throw;
  } catch (const gradalign::Error& e) {
    throw gradalign::ConfigError(e.what());
  }
  return cfg;
}

int run_experiment(gradalign::Command command, const Options& opts) {
  const gradalign::ExperimentConfig cfg = resolve_config(opts);
  gradalign::RunOptions run_opts;
  run_opts.threads = opts.threads;
  run_opts.timing = opts.timing;
  const gradalign::ExperimentOutput output = gradalign::run_command(command, cfg, run_opts);
  for (const auto& path : gradalign::write_outputs(cfg.output_dir, output, cfg, opts.plot))
    std::cout << path.string() << '\n';
  if (output.any_failure()) {
    for (const auto& r : output.rows)
      if (r.status != "ok")
        std::cerr << "run failed: " << r.rule << " lambda=" << r.lambda << " shots=" << r.shots << " seed=" << r.seed
                  << ": " << r.status << '\n';
    return kExitRunFailure;
  }
  return kExitOk;
}

int run_gradcheck(const Options& opts) {
  const gradalign::ExperimentConfig cfg = resolve_config(opts);
  const auto report =
      gradalign::run_gradcheck(cfg.master_seed, cfg.gradcheck.instances, cfg.gradcheck.tolerance);
  std::filesystem::create_directories(cfg.output_dir);
  const auto path = std::filesystem::path(cfg.output_dir) / "gradcheck.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gradalign::ConfigError("cannot write '" + path.string() + "'");
  gradalign::write_gradcheck_csv(out, report);
  std::cout << path.string() << '\n'
            << "cases=" << report.cases.size() << " max_rel_error=" << gradalign::format_double(report.max_rel_error())
            << " tolerance=" << gradalign::format_double(report.tolerance) << '\n';
  if (!report.all_pass()) {
    for (const auto& c : report.cases)
      if (!c.pass) std::cerr << "gradient mismatch: " << c.name << " instance " << c.instance << '\n';
    return kExitRunFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-aligned prompt tuning experiments on a synthetic vision-language model"};
  app.require_subcommand(1);
  Options opts;

  const std::map<std::string, gradalign::Command> experiments{
      {"fewshot", gradalign::Command::kFewShot},         {"base2new", gradalign::Command::kBase2New},
      {"domainshift", gradalign::Command::kDomainShift}, {"lambda-sweep", gradalign::Command::kLambdaSweep},
      {"angles", gradalign::Command::kAngles}};
  const std::map<std::string, std::string> help{
      {"fewshot", "Accuracy against shots for every configured rule"},
      {"base2new", "Base and new class accuracy with their harmonic mean"},
      {"domainshift", "Train on the source domain and evaluate on shifted targets"},
      {"lambda-sweep", "CE and ProGrad over the lambda grid"},
      {"angles", "Per-step angle between the CE and KL gradients"}};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "Experiment config (JSON); defaults when omitted")->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seeds", opts.seeds, "Use seeds 1..N")->check(CLI::PositiveNumber);
    sub->add_option("--threads", opts.threads, "Worker threads")->check(CLI::Range(1, 256));
  };

  std::map<CLI::App*, gradalign::Command> commands;
  for (const auto& [name, command] : experiments) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    add_common(sub);
    sub->add_flag("--plot", opts.plot, "Also write an SVG plot");
    sub->add_flag("--timing", opts.timing, "Record wall-clock time per run (breaks byte-identical output)");
    commands[sub] = command;
  }
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  add_common(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (gradcheck->parsed()) return run_gradcheck(opts);
    for (const auto& [sub, command] : commands)
      if (sub->parsed()) return run_experiment(command, opts);
  } catch (const gradalign::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitConfigError;
}
