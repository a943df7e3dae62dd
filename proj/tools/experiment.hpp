#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "experiment_config.hpp"
#include "mbgp/reference.hpp"
#include "mbgp/solver.hpp"

namespace mbgp::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

struct RunOptions {
  bool dry_run = false;
  int threads = 1;
  std::ostream* log = nullptr;
};

/// Discretization shared by every run of an experiment, plus the full system
/// used for loss accounting and the final solve (absent if it could not be factorized).
struct Setup {
  Discretization disc;
  std::optional<BatchSystem> full;
  std::vector<std::string> warnings;
};

Setup prepare(const ExperimentConfig& config);

struct RunResult {
  SolverConfig solver;
  RunHistory history;
  LossParts final_loss;
  bool has_final_loss = false;
  std::optional<FinalSolution> final;  // populated when predict = full
  Eigen::VectorXd u_num;               // on the evaluation grid; empty when predict = none
  std::optional<ErrorReport> errors;
};

/// Reference solution of the configured problem at a point.
double true_solution(const ExperimentConfig& config, const Point& x);

struct GridData {
  EvalGrid grid;
  Eigen::VectorXd u_true;
};

/// Evaluation grid over the problem domain with reference values filled in.
GridData make_grid(const ExperimentConfig& config, const Setup& setup);

/// One realization: run, loss at z^K, then (unless predict = none) the
/// prediction on `grid` and its error report.
RunResult execute_run(const Setup& setup, const ExperimentConfig& config, const SolverConfig& solver,
                      const GridData* grid);

// CSV writers. Floats use 17 significant digits.
std::string format_double(double v);
void write_loss_history(const std::filesystem::path& path, const RunHistory& history, bool record_timing);
void write_error_grid(const std::filesystem::path& path, const EvalGrid& grid, const Eigen::VectorXd& u_true,
                      const Eigen::VectorXd& u_num, const Eigen::VectorXd& abs_err);

struct CheckRow {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};
void write_checks(const std::filesystem::path& path, const std::vector<CheckRow>& rows);

/// Subcommands. Each returns an ExitCode.
int run_experiment(const ExperimentConfig& config, const RunOptions& options);
int run_sweep(const ExperimentConfig& config, const RunOptions& options);
int run_diagnostics(const ExperimentConfig& config, const RunOptions& options);
int run_predict(const ExperimentConfig& config, const std::filesystem::path& points_csv, PredictStrategy strategy,
                const RunOptions& options);

/// The individual diagnostic checks, exposed for reuse by tests.
std::vector<CheckRow> diagnostic_checks(const ExperimentConfig& config);

}  // namespace mbgp::cli
