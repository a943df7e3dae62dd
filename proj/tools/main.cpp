#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "mbgp/errors.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool dry_run = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config, "Experiment config file (INI)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Override solver.seed");
  cmd->add_option("-o,--out", args.out, "Override output.dir");
  cmd->add_flag("--dry-run", args.dry_run, "Validate and echo the config, then exit");
  cmd->add_option("-j,--threads", args.threads, "Parallel sweep realizations (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
}

mbgp::cli::ExperimentConfig load(const CommonArgs& args) {
  auto config = mbgp::cli::parse_config(args.config);
  if (args.seed) config.solver.seed = *args.seed;
  if (args.out) config.output.dir = *args.out;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mbgp::cli;

  CLI::App app{"Mini-batch proximal Gaussian-process PDE solver"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, diag_args, predict_args;
  auto* run = app.add_subcommand("run", "Single run: loss history, error grid, summary");
  add_common(run, run_args);
  auto* sweep = app.add_subcommand("sweep", "Batch-size sweep over several realizations");
  add_common(sweep, sweep_args);
  auto* diagnose = app.add_subcommand("diagnose", "Identity, finite-difference, stability and rate checks");
  add_common(diagnose, diag_args);
  auto* predict = app.add_subcommand("predict", "Run, then predict at points read from a CSV file");
  add_common(predict, predict_args);
  std::string points;
  std::string strategy = "full";
  predict->add_option("--points", points, "CSV with columns x1,x2")->required()->check(CLI::ExistingFile);
  predict->add_option("--strategy", strategy, "full or neighborhood")
      ->check(CLI::IsMember({"full", "neighborhood"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    if (*run) {
      RunOptions o{run_args.dry_run, run_args.threads, &std::cerr};
      return run_experiment(load(run_args), o);
    }
    if (*sweep) {
      RunOptions o{sweep_args.dry_run, sweep_args.threads, &std::cerr};
      return run_sweep(load(sweep_args), o);
    }
    if (*diagnose) {
      RunOptions o{diag_args.dry_run, diag_args.threads, &std::cerr};
      return run_diagnostics(load(diag_args), o);
    }
    RunOptions o{predict_args.dry_run, predict_args.threads, &std::cerr};
    const auto s = strategy == "full" ? mbgp::PredictStrategy::full : mbgp::PredictStrategy::neighborhood;
    return run_predict(load(predict_args), points, s, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const mbgp::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const mbgp::NumericalConditioning& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
}
