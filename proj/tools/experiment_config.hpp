#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbgp/kernels.hpp"
#include "mbgp/problems.hpp"
#include "mbgp/solver.hpp"

namespace mbgp::cli {

/// Raised for missing files, parse errors and validation failures. The
/// message starts with the offending key path ("solver.eta: ...").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PredictMode { full, neighborhood, none };

struct SweepSettings {
  std::vector<std::size_t> batch_sizes;
  int realizations = 10;
};

struct OutputSettings {
  std::filesystem::path dir = "out";
  bool record_timing = false;  // when false wall_ms is written as 0 so CSVs stay reproducible
  int grid_resolution = 100;
  PredictMode predict = PredictMode::full;
};

struct DiagnosticsSettings {
  std::size_t n_points = 256;
  std::vector<std::size_t> stability_batch_sizes{4, 8, 16, 32, 64};
  int stability_trials = 200;
  std::size_t rate_points = 64;
  std::vector<std::size_t> rate_batch_sizes{4, 8, 16};
  std::vector<int> rate_horizons{10, 100, 1000};
  int rate_seeds = 20;
  double rate_gamma = 1.0;
  double rate_rho = 0.5;
  int fd_draws = 200;
  int identity_trials = 50;
};

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::elliptic;
  std::size_t n_total = 0;
  std::size_t n_interior = 0;
  std::uint64_t collocation_seed = 0;
  double viscosity = 0.2;
  std::vector<double> lengthscales;  // one entry: isotropic; one per axis: anisotropic
  SolverConfig solver;
  std::optional<SweepSettings> sweep;
  OutputSettings output;
  DiagnosticsSettings diagnostics;

  ProblemSpec problem_spec() const;
  KernelSpec kernel_spec() const;
};

/// Parses an INI file with groups [problem], [kernel], [solver], [sweep],
/// [output] and [diagnostics]. Unknown groups or keys are rejected; missing
/// values take problem-specific defaults.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Resolved configuration as INI text (every key, defaults included).
std::string echo_config(const ExperimentConfig& config);

}  // namespace mbgp::cli
