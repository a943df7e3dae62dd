#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mbgp/solver.hpp"

namespace mbgp {

/// Constants of the weak-convexity argument: |f_i - y_i| <= u_bound and
/// curvature of f_i bounded by hessian_bound on the constraint set, giving
/// mu = u_bound * hessian_bound.
struct DiagnosticsConfig {
  double mu = 0.0;
  double u_bound = 0.0;
  double hessian_bound = 0.0;
  double domain_diameter = 0.0;

  void validate() const;

  /// Constants for f(z) = z^3 against data of magnitude at most `data_bound`
  /// on the box |z| <= clamp in `dimension` coordinates.
  static DiagnosticsConfig cubic_on_box(double clamp, double data_bound, int dimension = 1);
};

/// max |I - K (K + gamma I)^{-1} - gamma (K + gamma I)^{-1}| for SPD K.
double sampling_identity_residual(const Eigen::MatrixXd& k, double gamma);

struct WeakConvexityCheck {
  double mu = 0.0;
  double min_second_difference = 0.0;  // of h(z) + mu/2 z^2 over the grid
};

/// h(z) = 1/2 (z^3 - c)^2 on [-clamp, clamp] sampled with spacing `step`.
WeakConvexityCheck weak_convexity_check(double c, double clamp, double step = 1e-3);

/// Largest mismatch between closed-form operator entries and central
/// differences of lower-order closed-form entries, scaled by
/// sqrt(diag(L) diag(R)). Steps are 1e-3 times the lengthscale of the axis.
double kernel_consistency_error(const KernelSpec& spec, int draws, std::uint64_t seed);

struct StabilityPoint {
  std::size_t batch_size = 0;
  double mean_gap = 0.0;
  double std_error = 0.0;
  int trials = 0;
};

struct StabilityResult {
  std::vector<StabilityPoint> points;
  double slope = 0.0;  // least-squares slope of log(mean_gap) against log(M)
};

/// Swap-one stability of the batch proximal map. For each trial a uniform
/// batch I and a copy with one entry replaced by an index outside I are solved
/// from the same centre; the objective phi(u, z; xi') at a fresh index xi'
/// outside both batches is compared. Penalty mode only.
StabilityResult stability_probe(const Discretization& disc, const SolverConfig& config,
                                std::span<const std::size_t> batch_sizes, int trials, std::uint64_t seed);

/// phi(u, z; xi) with u = kappa(., phi_I) c and c = A_I^{-1} z_I.
double single_sample_objective(const Discretization& disc, const BatchSystem& system, const Eigen::VectorXd& z,
                               const SolverConfig& config, std::size_t xi);

struct RateStudyConfig {
  std::vector<std::size_t> batch_sizes{4, 8, 16};
  std::vector<int> horizons{10, 100, 1000};
  int seeds = 20;
  double gamma = 1.0;
  double rho = 0.5;
  std::uint64_t base_seed = 0;
};

struct RateStudyResult {
  std::vector<std::size_t> batch_sizes;
  std::vector<int> horizons;
  /// mean_sq_gradient[m][h]: average over seeds of (1/K) sum_{k<=K} |grad of the envelope at z^k|^2.
  std::vector<std::vector<double>> mean_sq_gradient;
};

/// Uniform-sampler runs in the configured mode; the Moreau gradient with
/// weight `rho` is evaluated at every iterate.
RateStudyResult rate_study(const Discretization& disc, const SolverConfig& config, const RateStudyConfig& study);

}  // namespace mbgp
