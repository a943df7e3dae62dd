#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mbgp/batching.hpp"
#include "mbgp/kernels.hpp"
#include "mbgp/linalg.hpp"
#include "mbgp/problems.hpp"

namespace mbgp {

/// elimination: PDE and boundary constraints are substituted exactly and only
///              the reduced variables are optimized.
/// penalty:     every latent coordinate is free and the residuals enter as a
///              least-squares misfit weighted by 1/M (or 1/N for the full problem).
enum class SolveMode : std::uint8_t { elimination, penalty };
enum class SamplerKind : std::uint8_t { neighborhood, uniform };

const char* to_string(SolveMode mode);
const char* to_string(SamplerKind kind);
SolveMode parse_solve_mode(std::string_view name);
SamplerKind parse_sampler_kind(std::string_view name);

struct SolverConfig {
  double eta = 1e-13;
  double gamma = 1.0;
  double rho = 1.0;
  double lambda_reg = 1.0;
  double beta = 1.0;
  /// When true the batch matrix is K + eta * R (block nugget); otherwise K + (lambda M / beta) I.
  bool nugget_substitution = true;
  int iterations = 3000;
  std::size_t batch_size = 12;
  double gn_tol = 1e-5;
  int gn_max_iters = 30;
  SolveMode mode = SolveMode::elimination;
  SamplerKind sampler = SamplerKind::neighborhood;
  std::optional<double> clamp_bound;
  std::uint64_t seed = 0;
  /// Full loss is evaluated at iterations 1, K and every multiple of this.
  int record_every = 1;
  /// Divide coordinates by the kernel lengthscales before neighbour search.
  bool metric_scaling = false;

  /// Throws InvalidArgument naming the offending field.
  void validate(std::size_t n_points) const;

  /// Weight of the quadratic form: lambda in penalty mode, 1 under elimination.
  double quad_weight() const { return mode == SolveMode::penalty ? lambda_reg : 1.0; }
};

/// Everything fixed by the problem and the collocation set.
struct Discretization {
  ProblemSpec problem;
  CollocationSet colloc;
  KernelSpec kernel;
  std::vector<Functional> functionals;
  LatentLayout layout;

  Discretization(ProblemSpec problem, CollocationSet colloc, KernelSpec kernel);

  std::size_t num_points() const { return colloc.size(); }
};

/// Global latent indices optimized at point i under the given mode.
std::vector<std::size_t> free_coordinates(const Discretization& disc, SolveMode mode, std::size_t i);
std::vector<std::size_t> free_coordinates(const Discretization& disc, SolveMode mode,
                                          std::span<const std::size_t> points);

struct LatentState {
  Eigen::VectorXd z;
  int k = 1;
};

/// Reduced unknowns zero, boundary blocks equal to their data, eliminated
/// entries derived (so every residual vanishes).
LatentState initial_state(const Discretization& disc, const SolverConfig& config);

struct BatchSystem {
  std::vector<std::size_t> points;      // ascending point indices
  std::vector<std::size_t> latent;      // global latent index of each functional
  std::vector<Functional> functionals;  // phi_I
  Eigen::MatrixXd gram;                 // kappa(phi_I, phi_I); empty unless kept
  Eigen::VectorXd nugget_scale;         // diagonal of R
  double eta = 0.0;                     // multiplier of R
  Cholesky factor;                      // of gram + eta * diag(nugget_scale)

  std::size_t size() const { return functionals.size(); }
  /// gram + eta * R; requires the Gram matrix to have been kept.
  Eigen::MatrixXd matrix() const;
};

/// Assembles A for the functionals at `points` and factorizes it. With nugget
/// substitution R groups functionals by operator and scales each group by its
/// mean Gram diagonal; without it A = K + (lambda M / beta) I. `eta_override`
/// replaces config.eta (used for the conditioning retry).
BatchSystem assemble_batch(const Discretization& disc, std::span<const std::size_t> points,
                           const SolverConfig& config, bool keep_gram = false,
                           std::optional<double> eta_override = std::nullopt);

/// assemble_batch with a single retry at 10 eta on a conditioning failure.
BatchSystem assemble_with_retry(const Discretization& disc, std::span<const std::size_t> points,
                                const SolverConfig& config, bool keep_gram = false);

struct ObjectiveParts {
  double quadratic = 0.0;
  double misfit = 0.0;
  double prox = 0.0;
  double total() const { return quadratic + misfit + prox; }
};

struct StepReport {
  LatentState state;
  ObjectiveParts objective;  // batch objective at the returned iterate
  ObjectiveParts start;      // batch objective at the centre
  int gn_iterations = 0;
  bool converged = true;
};

/// One proximal update on the batch behind `system`, with weight `weight`
/// (gamma for the iteration, rho for final solves) centred at `state.z`.
/// Entries outside the batch are copied unchanged.
StepReport proximal_step(const Discretization& disc, const LatentState& state, const BatchSystem& system,
                         const SolverConfig& config, double weight);
StepReport proximal_step(const Discretization& disc, const LatentState& state, const BatchSystem& system,
                         const SolverConfig& config);

struct LossParts {
  double quadratic = 0.0;
  double misfit = 0.0;
  double total() const { return quadratic + misfit; }
};

/// psi(z) = q/2 z^T A^{-1} z + 1/(2N) sum |f_i(z_i) - y_i|^2 over the full
/// system. The misfit is reported as exactly zero under elimination.
LossParts full_loss(const Discretization& disc, const BatchSystem& full, const LatentState& state,
                    const SolverConfig& config);

/// Step k starts from z^k (z^1 is the initial state) and produces z^{k+1}.
/// The loss columns describe z^k; the batch objective is the value step k reached.
struct IterationRecord {
  int k = 0;
  double psi_quadratic = 0.0;  // NaN when the loss was not evaluated at this k
  double psi_misfit = 0.0;
  double batch_objective = 0.0;
  int gn_iters = 0;
  bool gn_converged = true;
  double wall_ms = 0.0;
  std::size_t seed_index = 0;
};

struct RunHistory {
  std::vector<IterationRecord> records;  // one per iteration, records[k-1] describes step k
  LatentState final_state;
  LossParts initial_loss;
  double eta_used = 0.0;
  int nonconverged_steps = 0;
  /// Set when no full system was available and psi_quadratic holds the batch quadratic form.
  bool loss_from_batches = false;
};

/// K iterations of sample -> assemble -> proximal step. `full` supplies the
/// factor used for loss accounting; pass nullptr to record batch quadratics instead.
RunHistory run(const Discretization& disc, const SolverConfig& config, const BatchSystem* full);
RunHistory run(const Discretization& disc, const SolverConfig& config, const BatchSystem* full,
               LatentState start);

struct FinalSolution {
  Eigen::VectorXd coefficients;  // A^{-1} z_hat
  LatentState state;             // z_hat
  int gn_iterations = 0;
  bool converged = true;
  double objective = 0.0;        // psi(z_hat) + rho/2 |z_hat - z_bar|^2 over free variables
};

/// Full-batch proximal solve centred at state.z; rho = 0 gives the plain GP solve.
FinalSolution final_solve(const Discretization& disc, const BatchSystem& full, const LatentState& state,
                          const SolverConfig& config, double rho);

/// u(x) = kappa(x, phi) c for each x.
Eigen::VectorXd predict_full(const Discretization& disc, const FinalSolution& solution,
                             std::span<const Point> xs);
double predict_full(const Discretization& disc, const FinalSolution& solution, const Point& x);

/// Proximal solve on the batch of the M = config.batch_size training points
/// nearest to x (weight config.rho, centred at state), evaluated at x.
double predict_neighborhood(const Discretization& disc, const SpatialIndex& index, const LatentState& state,
                            const SolverConfig& config, const Point& x);
Eigen::VectorXd predict_neighborhood(const Discretization& disc, const SpatialIndex& index,
                                     const LatentState& state, const SolverConfig& config,
                                     std::span<const Point> xs);

enum class PredictStrategy : std::uint8_t { full, neighborhood };

struct MoreauResult {
  Eigen::VectorXd gradient;  // rho (z_bar - z_hat) over the free coordinates
  double envelope = 0.0;     // min_z psi(z) + rho/2 |z - z_bar|^2
  FinalSolution solution;
};

MoreauResult moreau_gradient(const Discretization& disc, const BatchSystem& full, const LatentState& state,
                             const SolverConfig& config, double rho);

/// Spatial index over the collocation points, honouring config.metric_scaling.
SpatialIndex make_index(const Discretization& disc, const SolverConfig& config);

}  // namespace mbgp
