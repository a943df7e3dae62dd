#include "mbgp/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "mbgp/errors.hpp"
#include "mbgp/gauss_newton.hpp"

namespace mbgp {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void require(bool ok, const std::string& field, const std::string& reason) {
  if (!ok) throw InvalidArgument("solver." + field + ": " + reason);
}

// Local view of one proximal subproblem: which latent coordinates belong to
// the batch, which of them are free, and how to lift free values to the
// stacked batch vector w.
struct BatchView {
  const Discretization* disc = nullptr;
  const BatchSystem* system = nullptr;
  SolveMode mode = SolveMode::elimination;
  std::vector<std::size_t> free;       // global latent indices of the free variables
  std::vector<Index> block_offset;     // offset of each batch point's block inside w
  std::vector<Index> free_offset;      // offset of each batch point's free variables inside r

  BatchView(const Discretization& d, const BatchSystem& s, SolveMode m) : disc(&d), system(&s), mode(m) {
    Index w_off = 0;
    Index r_off = 0;
    for (std::size_t p : s.points) {
      block_offset.push_back(w_off);
      free_offset.push_back(r_off);
      const auto cols = free_coordinates(d, m, p);
      free.insert(free.end(), cols.begin(), cols.end());
      w_off += d.layout[p].width;
      r_off += static_cast<Index>(cols.size());
    }
  }

  void lift(const Eigen::VectorXd& r, Eigen::VectorXd& w, Eigen::MatrixXd* jac) const {
    const auto n_w = idx(system->size());
    if (mode == SolveMode::penalty) {
      w = r;
      if (jac) jac->setIdentity(n_w, n_w);
      return;
    }
    w.resize(n_w);
    if (jac) jac->setZero(n_w, r.size());
    for (std::size_t b = 0; b < system->points.size(); ++b) {
      const std::size_t p = system->points[b];
      const int width = disc->layout[p].width;
      const int rw = reduced_width(disc->problem, disc->colloc, p);
      const EliminatedBlock blk =
          eliminate(disc->problem, disc->colloc, p, r.segment(free_offset[b], rw));
      w.segment(block_offset[b], width) = blk.full;
      if (jac && rw > 0) jac->block(block_offset[b], free_offset[b], width, rw) = blk.jacobian;
    }
  }

  void misfit(const Eigen::VectorXd& w, Eigen::VectorXd& e, Eigen::MatrixXd* jac) const {
    const auto m = idx(system->points.size());
    e.resize(m);
    if (jac) jac->setZero(m, w.size());
    for (std::size_t b = 0; b < system->points.size(); ++b) {
      const std::size_t p = system->points[b];
      const int width = disc->layout[p].width;
      const auto block = w.segment(block_offset[b], width);
      e[idx(b)] = residual(disc->problem, disc->colloc, p, block);
      if (jac) {
        jac->block(idx(b), block_offset[b], 1, width) =
            residual_jacobian(disc->problem, disc->colloc, p, block).transpose();
      }
    }
  }

  Eigen::VectorXd gather(const Eigen::VectorXd& z) const {
    Eigen::VectorXd r(idx(free.size()));
    for (std::size_t j = 0; j < free.size(); ++j) r[idx(j)] = z[idx(free[j])];
    return r;
  }

  ReducedObjective objective(const SolverConfig& config, double weight, Eigen::VectorXd center) const {
    ReducedObjective obj;
    obj.lift = [this](const Eigen::VectorXd& r, Eigen::VectorXd& w, Eigen::MatrixXd* jac) { lift(r, w, jac); };
    if (mode == SolveMode::penalty) {
      obj.misfit = [this](const Eigen::VectorXd& w, Eigen::VectorXd& e, Eigen::MatrixXd* jac) {
        misfit(w, e, jac);
      };
      obj.misfit_weight = 1.0 / static_cast<double>(system->points.size());
    }
    obj.factor = &system->factor;
    obj.quad_weight = config.quad_weight();
    obj.prox_weight = weight;
    obj.center = std::move(center);
    obj.clamp = config.clamp_bound;
    return obj;
  }
};

ObjectiveParts to_parts(const ReducedObjective::Parts& p) { return {p.quadratic, p.misfit, p.prox}; }

}  // namespace

const char* to_string(SolveMode mode) {
  return mode == SolveMode::elimination ? "elimination" : "penalty";
}

const char* to_string(SamplerKind kind) {
  return kind == SamplerKind::neighborhood ? "neighborhood" : "uniform";
}

SolveMode parse_solve_mode(std::string_view name) {
  if (name == "elimination") return SolveMode::elimination;
  if (name == "penalty") return SolveMode::penalty;
  throw InvalidArgument("unknown solve mode '" + std::string(name) + "'");
}

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "neighborhood") return SamplerKind::neighborhood;
  if (name == "uniform") return SamplerKind::uniform;
  throw InvalidArgument("unknown sampler '" + std::string(name) + "'");
}

void SolverConfig::validate(std::size_t n_points) const {
  require(eta > 0.0 && std::isfinite(eta), "eta", "must be positive");
  require(gamma > 0.0 && std::isfinite(gamma), "gamma", "must be positive");
  require(rho >= 0.0 && std::isfinite(rho), "rho", "must be nonnegative");
  require(lambda_reg > 0.0, "lambda_reg", "must be positive");
  require(beta > 0.0, "beta", "must be positive");
  require(iterations >= 1, "iterations", "must be at least 1");
  require(batch_size >= 1 && batch_size <= n_points, "batch_size",
          "must lie in [1, " + std::to_string(n_points) + "]");
  require(gn_tol > 0.0, "gn_tol", "must be positive");
  require(gn_max_iters >= 1, "gn_max_iters", "must be at least 1");
  require(record_every >= 1, "record_every", "must be at least 1");
  require(!clamp_bound || *clamp_bound > 0.0, "clamp_bound", "must be positive");
}

Discretization::Discretization(ProblemSpec p, CollocationSet c, KernelSpec k)
    : problem(std::move(p)), colloc(std::move(c)), kernel(std::move(k)) {
  if (kernel.dimension() != problem.dimension()) {
    throw InvalidArgument("kernel dimension " + std::to_string(kernel.dimension()) +
                          " does not match problem dimension " + std::to_string(problem.dimension()));
  }
  if (colloc.size() == 0) throw InvalidArgument("empty collocation set");
  for (DiffOp op : problem.interior_ops) validate_op(kernel, op);
  for (DiffOp op : problem.boundary_ops) validate_op(kernel, op);
  functionals = build_functionals(problem, colloc);
  layout = latent_layout(problem, colloc);
}

std::vector<std::size_t> free_coordinates(const Discretization& disc, SolveMode mode, std::size_t i) {
  const BlockSpan& blk = disc.layout[i];
  std::vector<std::size_t> out;
  if (mode == SolveMode::penalty) {
    for (int j = 0; j < blk.width; ++j) out.push_back(blk.offset + static_cast<std::size_t>(j));
  } else {
    for (int j : reduced_coordinates(disc.problem, disc.colloc, i)) {
      out.push_back(blk.offset + static_cast<std::size_t>(j));
    }
  }
  return out;
}

std::vector<std::size_t> free_coordinates(const Discretization& disc, SolveMode mode,
                                          std::span<const std::size_t> points) {
  std::vector<std::size_t> out;
  for (std::size_t p : points) {
    const auto cols = free_coordinates(disc, mode, p);
    out.insert(out.end(), cols.begin(), cols.end());
  }
  return out;
}

LatentState initial_state(const Discretization& disc, const SolverConfig& config) {
  LatentState s;
  s.z = Eigen::VectorXd::Zero(idx(disc.layout.total));
  for (std::size_t i = 0; i < disc.num_points(); ++i) {
    const int rw = reduced_width(disc.problem, disc.colloc, i);
    const EliminatedBlock blk = eliminate(disc.problem, disc.colloc, i, Eigen::VectorXd::Zero(rw));
    s.z.segment(idx(disc.layout[i].offset), disc.layout[i].width) = blk.full;
  }
  if (config.clamp_bound) {
    const double c = *config.clamp_bound;
    for (std::size_t i = 0; i < disc.num_points(); ++i) {
      for (std::size_t j : free_coordinates(disc, config.mode, i)) s.z[idx(j)] = std::clamp(s.z[idx(j)], -c, c);
    }
  }
  s.k = 1;
  return s;
}

Eigen::MatrixXd BatchSystem::matrix() const {
  if (gram.rows() != idx(size())) throw InvalidArgument("BatchSystem::matrix: Gram matrix was not kept");
  Eigen::MatrixXd a = gram;
  a.diagonal() += eta * nugget_scale;
  return a;
}

BatchSystem assemble_batch(const Discretization& disc, std::span<const std::size_t> points,
                           const SolverConfig& config, bool keep_gram, std::optional<double> eta_override) {
  if (points.empty()) throw InvalidArgument("assemble_batch: empty batch");
  BatchSystem s;
  s.points.assign(points.begin(), points.end());
  std::sort(s.points.begin(), s.points.end());
  if (std::adjacent_find(s.points.begin(), s.points.end()) != s.points.end()) {
    throw InvalidArgument("assemble_batch: duplicate point index");
  }
  if (s.points.back() >= disc.num_points()) throw InvalidArgument("assemble_batch: point index out of range");

  for (std::size_t p : s.points) {
    const BlockSpan& blk = disc.layout[p];
    for (int j = 0; j < blk.width; ++j) {
      s.latent.push_back(blk.offset + static_cast<std::size_t>(j));
      s.functionals.push_back(disc.functionals[blk.offset + static_cast<std::size_t>(j)]);
    }
  }
  const auto n = idx(s.functionals.size());
  s.nugget_scale.resize(n);
  if (config.nugget_substitution) {
    s.eta = eta_override.value_or(config.eta);
    // Stationary kernel: every functional with the same operator has the same
    // Gram diagonal, so the group mean is that common value.
    for (Index j = 0; j < n; ++j) s.nugget_scale[j] = diagonal_value(disc.kernel, s.functionals[std::size_t(j)].op);
  } else {
    const double m = static_cast<double>(s.points.size());
    s.eta = eta_override.value_or(config.lambda_reg * m / config.beta);
    s.nugget_scale.setOnes();
  }

  Eigen::MatrixXd a = gram(disc.kernel, s.functionals);
  if (keep_gram) s.gram = a;
  a.diagonal() += s.eta * s.nugget_scale;
  s.factor = factorize_spd(std::move(a), s.eta);
  return s;
}

BatchSystem assemble_with_retry(const Discretization& disc, std::span<const std::size_t> points,
                                const SolverConfig& config, bool keep_gram) {
  try {
    return assemble_batch(disc, points, config, keep_gram);
  } catch (const NumericalConditioning& e) {
    return assemble_batch(disc, points, config, keep_gram, 10.0 * e.eta());
  }
}

StepReport proximal_step(const Discretization& disc, const LatentState& state, const BatchSystem& system,
                         const SolverConfig& config, double weight) {
  if (state.z.size() != idx(disc.layout.total)) throw InvalidArgument("proximal_step: state has wrong length");
  const BatchView view(disc, system, config.mode);
  Eigen::VectorXd center = view.gather(state.z);
  const ReducedObjective obj = view.objective(config, weight, center);

  StepReport rep;
  rep.start = to_parts(obj.evaluate(obj.project(center)));
  const GaussNewtonResult gn = gauss_newton(obj, center, config.gn_tol, config.gn_max_iters);
  rep.objective = to_parts(obj.evaluate(gn.z));
  rep.gn_iterations = gn.iterations;
  rep.converged = gn.converged;

  rep.state.z = state.z;
  rep.state.k = state.k + 1;
  if (config.mode == SolveMode::penalty) {
    for (std::size_t j = 0; j < view.free.size(); ++j) rep.state.z[idx(view.free[j])] = gn.z[idx(j)];
  } else {
    Eigen::VectorXd w;
    view.lift(gn.z, w, nullptr);
    for (std::size_t j = 0; j < system.latent.size(); ++j) rep.state.z[idx(system.latent[j])] = w[idx(j)];
  }
  return rep;
}

StepReport proximal_step(const Discretization& disc, const LatentState& state, const BatchSystem& system,
                         const SolverConfig& config) {
  return proximal_step(disc, state, system, config, config.gamma);
}

LossParts full_loss(const Discretization& disc, const BatchSystem& full, const LatentState& state,
                    const SolverConfig& config) {
  Eigen::VectorXd w(idx(full.latent.size()));
  for (std::size_t j = 0; j < full.latent.size(); ++j) w[idx(j)] = state.z[idx(full.latent[j])];
  LossParts loss;
  loss.quadratic = 0.5 * config.quad_weight() * inverse_quadratic_form(full.factor, w);
  if (config.mode == SolveMode::penalty) {
    double sum = 0.0;
    for (std::size_t p : full.points) {
      const BlockSpan& blk = disc.layout[p];
      const double r = residual(disc.problem, disc.colloc, p, state.z.segment(idx(blk.offset), blk.width));
      sum += r * r;
    }
    loss.misfit = sum / (2.0 * static_cast<double>(full.points.size()));
  }
  return loss;
}

SpatialIndex make_index(const Discretization& disc, const SolverConfig& config) {
  const std::vector<Point> pts = disc.colloc.all_points();
  std::optional<Point> scale;
  if (config.metric_scaling) {
    scale = Point(disc.kernel.dimension());
    const auto& ls = disc.kernel.lengthscales();
    for (int a = 0; a < disc.kernel.dimension(); ++a) {
      (*scale)[a] = ls.size() == 1 ? ls[0] : ls[static_cast<std::size_t>(a)];
    }
  }
  return build_index(pts, scale);
}

RunHistory run(const Discretization& disc, const SolverConfig& config, const BatchSystem* full) {
  return run(disc, config, full, initial_state(disc, config));
}

RunHistory run(const Discretization& disc, const SolverConfig& config, const BatchSystem* full,
               LatentState start) {
  using Clock = std::chrono::steady_clock;
  config.validate(disc.num_points());
  if (start.z.size() != idx(disc.layout.total)) throw InvalidArgument("run: start state has wrong length");

  Rng rng(config.seed);
  std::optional<SpatialIndex> index;
  if (config.sampler == SamplerKind::neighborhood) index.emplace(make_index(disc, config));

  RunHistory hist;
  hist.records.reserve(static_cast<std::size_t>(config.iterations));
  hist.loss_from_batches = full == nullptr;
  hist.eta_used = config.eta;
  if (full) hist.initial_loss = full_loss(disc, *full, start, config);

  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  LatentState state = std::move(start);
  for (int k = 1; k <= config.iterations; ++k) {
    const auto t0 = Clock::now();
    const Batch batch = config.sampler == SamplerKind::neighborhood
                            ? sample_batch(*index, rng, config.batch_size)
                            : uniform_batch(rng, disc.num_points(), config.batch_size);
    const BatchSystem system = assemble_with_retry(disc, batch.indices, config);
    hist.eta_used = std::max(hist.eta_used, system.eta);
    StepReport step = proximal_step(disc, state, system, config);

    // Record k describes z^k, the iterate the k-th step starts from.
    IterationRecord rec;
    rec.k = k;
    rec.batch_objective = step.objective.total();
    rec.gn_iters = step.gn_iterations;
    rec.gn_converged = step.converged;
    rec.seed_index = batch.seed_index;
    if (!step.converged) ++hist.nonconverged_steps;
    const bool record = k == 1 || k == config.iterations || k % config.record_every == 0;
    if (!record) {
      rec.psi_quadratic = kNaN;
      rec.psi_misfit = kNaN;
    } else if (full) {
      const LossParts loss = k == 1 ? hist.initial_loss : full_loss(disc, *full, state, config);
      rec.psi_quadratic = loss.quadratic;
      rec.psi_misfit = loss.misfit;
    } else {
      rec.psi_quadratic = step.start.quadratic;
      rec.psi_misfit = step.start.misfit;
    }
    state = std::move(step.state);
    rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    hist.records.push_back(rec);
  }
  hist.final_state = std::move(state);
  return hist;
}

FinalSolution final_solve(const Discretization& disc, const BatchSystem& full, const LatentState& state,
                          const SolverConfig& config, double rho) {
  if (full.points.size() != disc.num_points()) throw InvalidArgument("final_solve: system does not cover all points");
  if (!(rho >= 0.0)) throw InvalidArgument("final_solve: rho must be nonnegative");
  StepReport step = proximal_step(disc, state, full, config, rho);
  FinalSolution sol;
  Eigen::VectorXd w(idx(full.latent.size()));
  for (std::size_t j = 0; j < full.latent.size(); ++j) w[idx(j)] = step.state.z[idx(full.latent[j])];
  sol.coefficients = full.factor.solve(w);
  sol.state = std::move(step.state);
  sol.state.k = state.k;
  sol.gn_iterations = step.gn_iterations;
  sol.converged = step.converged;
  sol.objective = step.objective.total();
  return sol;
}

Eigen::VectorXd predict_full(const Discretization& disc, const FinalSolution& solution,
                             std::span<const Point> xs) {
  constexpr std::size_t kChunk = 256;
  Eigen::VectorXd out(idx(xs.size()));
  std::vector<Functional> rows;
  for (std::size_t begin = 0; begin < xs.size(); begin += kChunk) {
    const std::size_t end = std::min(xs.size(), begin + kChunk);
    rows.clear();
    for (std::size_t i = begin; i < end; ++i) rows.push_back({xs[i], DiffOp::identity()});
    out.segment(idx(begin), idx(end - begin)) = cross_gram(disc.kernel, rows, disc.functionals) * solution.coefficients;
  }
  return out;
}

double predict_full(const Discretization& disc, const FinalSolution& solution, const Point& x) {
  return cross_row(disc.kernel, x, disc.functionals).dot(solution.coefficients);
}

double predict_neighborhood(const Discretization& disc, const SpatialIndex& index, const LatentState& state,
                            const SolverConfig& config, const Point& x) {
  const std::size_t m = std::min(config.batch_size, disc.num_points());
  const std::vector<std::size_t> nearest = index.knn(x, m);
  const BatchSystem system = assemble_with_retry(disc, nearest, config);
  const StepReport step = proximal_step(disc, state, system, config, config.rho);
  Eigen::VectorXd w(idx(system.latent.size()));
  for (std::size_t j = 0; j < system.latent.size(); ++j) w[idx(j)] = step.state.z[idx(system.latent[j])];
  const Eigen::VectorXd c = system.factor.solve(w);
  return cross_row(disc.kernel, x, system.functionals).dot(c);
}

Eigen::VectorXd predict_neighborhood(const Discretization& disc, const SpatialIndex& index,
                                     const LatentState& state, const SolverConfig& config,
                                     std::span<const Point> xs) {
  Eigen::VectorXd out(idx(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) out[idx(i)] = predict_neighborhood(disc, index, state, config, xs[i]);
  return out;
}

MoreauResult moreau_gradient(const Discretization& disc, const BatchSystem& full, const LatentState& state,
                             const SolverConfig& config, double rho) {
  if (!(rho > 0.0)) throw InvalidArgument("moreau_gradient: rho must be positive");
  MoreauResult res;
  res.solution = final_solve(disc, full, state, config, rho);
  const std::vector<std::size_t> free = free_coordinates(disc, config.mode, full.points);
  res.gradient.resize(idx(free.size()));
  for (std::size_t j = 0; j < free.size(); ++j) {
    res.gradient[idx(j)] = rho * (state.z[idx(free[j])] - res.solution.state.z[idx(free[j])]);
  }
  res.envelope = res.solution.objective;
  return res;
}

}  // namespace mbgp
