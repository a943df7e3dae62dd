#include "mbgp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <unordered_set>

#include <Eigen/Cholesky>

#include "mbgp/errors.hpp"

namespace mbgp {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

std::size_t draw_outside(Rng& rng, std::size_t n, const std::unordered_set<std::size_t>& taken) {
  if (taken.size() >= n) throw InvalidArgument("no index left outside the batch");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (;;) {
    const std::size_t j = pick(rng);
    if (!taken.contains(j)) return j;
  }
}

double step_for(const KernelSpec& spec, int axis) {
  const auto& ls = spec.lengthscales();
  return 1e-3 * (ls.size() == 1 ? ls[0] : ls[static_cast<std::size_t>(axis)]);
}

// Applies `op` to g by central differences, g(x) evaluated in closed form.
template <typename F>
double apply_fd(const KernelSpec& spec, DiffOp op, const Point& x, F&& g) {
  auto shifted = [&](int axis, double h) {
    Point p = x;
    p[axis] += h;
    return g(p);
  };
  auto second = [&](int axis) {
    const double h = step_for(spec, axis);
    return (shifted(axis, h) - 2.0 * g(x) + shifted(axis, -h)) / (h * h);
  };
  switch (op.kind) {
    case DiffOp::Kind::identity:
      return g(x);
    case DiffOp::Kind::first_deriv: {
      const double h = step_for(spec, op.axis);
      return (shifted(op.axis, h) - shifted(op.axis, -h)) / (2.0 * h);
    }
    case DiffOp::Kind::second_deriv:
      return second(op.axis);
    case DiffOp::Kind::laplacian: {
      double s = 0.0;
      for (int a = 0; a < spec.dimension(); ++a) s += second(a);
      return s;
    }
  }
  return 0.0;
}

}  // namespace

void DiagnosticsConfig::validate() const {
  if (!(mu >= 0.0 && u_bound >= 0.0 && hessian_bound >= 0.0 && domain_diameter >= 0.0)) {
    throw InvalidArgument("diagnostics constants must be nonnegative");
  }
}

DiagnosticsConfig DiagnosticsConfig::cubic_on_box(double clamp, double data_bound, int dimension) {
  if (!(clamp > 0.0) || data_bound < 0.0 || dimension < 1) throw InvalidArgument("cubic_on_box: invalid box");
  DiagnosticsConfig c;
  c.u_bound = clamp * clamp * clamp + data_bound;
  c.hessian_bound = 6.0 * clamp;
  c.mu = c.u_bound * c.hessian_bound;
  c.domain_diameter = 2.0 * clamp * std::sqrt(static_cast<double>(dimension));
  return c;
}

double sampling_identity_residual(const Eigen::MatrixXd& k, double gamma) {
  if (k.rows() != k.cols()) throw InvalidArgument("sampling_identity_residual: matrix must be square");
  const auto n = k.rows();
  Eigen::MatrixXd shifted = k;
  shifted.diagonal().array() += gamma;
  const Eigen::LDLT<Eigen::MatrixXd> f(shifted);
  const Eigen::MatrixXd inv = f.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) - k * inv;
  return (lhs - gamma * inv).cwiseAbs().maxCoeff();
}

WeakConvexityCheck weak_convexity_check(double c, double clamp, double step) {
  if (!(clamp > 0.0) || !(step > 0.0)) throw InvalidArgument("weak_convexity_check: invalid grid");
  const DiagnosticsConfig k = DiagnosticsConfig::cubic_on_box(clamp, std::abs(c));
  auto g = [&](double z) {
    const double r = z * z * z - c;
    return 0.5 * r * r + 0.5 * k.mu * z * z;
  };
  WeakConvexityCheck out;
  out.mu = k.mu;
  out.min_second_difference = std::numeric_limits<double>::infinity();
  const auto n = static_cast<long>(std::floor(2.0 * clamp / step));
  for (long i = 1; i < n; ++i) {
    const double z = -clamp + static_cast<double>(i) * step;
    const double d2 = (g(z + step) - 2.0 * g(z) + g(z - step)) / (step * step);
    out.min_second_difference = std::min(out.min_second_difference, d2);
  }
  return out;
}

double kernel_consistency_error(const KernelSpec& spec, int draws, std::uint64_t seed) {
  const int d = spec.dimension();
  std::vector<DiffOp> ops{DiffOp::identity(), DiffOp::laplacian()};
  for (int a = 0; a < d; ++a) {
    ops.push_back(DiffOp::first(a));
    ops.push_back(DiffOp::second(a));
  }
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick_op(0, ops.size() - 1);
  std::uniform_real_distribution<double> offset(-2.0, 2.0);
  std::uniform_real_distribution<double> coord(0.0, 1.0);

  double worst = 0.0;
  for (int t = 0; t < draws; ++t) {
    const DiffOp a = ops[pick_op(rng)];
    const DiffOp b = ops[pick_op(rng)];
    Point x(d), y(d);
    for (int i = 0; i < d; ++i) {
      const double ell = step_for(spec, i) * 1e3;
      x[i] = coord(rng);
      y[i] = x[i] + ell * offset(rng);
    }
    const double exact = eval_op_k(spec, a, x, b, y);
    const double fd = apply_fd(spec, a, x, [&](const Point& p) { return eval_op_k(spec, DiffOp::identity(), p, b, y); });
    const double scale = std::sqrt(diagonal_value(spec, a) * diagonal_value(spec, b));
    worst = std::max(worst, std::abs(fd - exact) / scale);
  }
  return worst;
}

double single_sample_objective(const Discretization& disc, const BatchSystem& system, const Eigen::VectorXd& z,
                               const SolverConfig& config, std::size_t xi) {
  if (system.gram.rows() != idx(system.size())) {
    throw InvalidArgument("single_sample_objective: the batch Gram matrix must be kept");
  }
  Eigen::VectorXd w(idx(system.latent.size()));
  for (std::size_t j = 0; j < system.latent.size(); ++j) w[idx(j)] = z[idx(system.latent[j])];
  const Eigen::VectorXd c = system.factor.solve(w);
  const double norm2 = c.dot(system.gram * c);

  const BlockSpan& blk = disc.layout[xi];
  std::vector<Functional> at_xi(disc.functionals.begin() + static_cast<std::ptrdiff_t>(blk.offset),
                                disc.functionals.begin() + static_cast<std::ptrdiff_t>(blk.offset) + blk.width);
  const Eigen::VectorXd observed = cross_gram(disc.kernel, at_xi, system.functionals) * c;
  const auto z_xi = z.segment(idx(blk.offset), blk.width);
  const double fit = (observed - z_xi).squaredNorm();
  const double r = residual(disc.problem, disc.colloc, xi, z_xi);
  return 0.5 * config.lambda_reg * norm2 + 0.5 * config.beta * fit + 0.5 * r * r;
}

StabilityResult stability_probe(const Discretization& disc, const SolverConfig& config,
                                std::span<const std::size_t> batch_sizes, int trials, std::uint64_t seed) {
  if (config.mode != SolveMode::penalty) throw InvalidArgument("stability_probe: penalty mode required");
  if (trials < 1) throw InvalidArgument("stability_probe: trials must be positive");
  const std::size_t n = disc.num_points();
  const LatentState center = initial_state(disc, config);

  StabilityResult out;
  Rng rng(seed);
  for (std::size_t m : batch_sizes) {
    if (m < 1 || m + 2 > n) throw InvalidArgument("stability_probe: batch size must leave two spare points");
    std::vector<double> gaps;
    gaps.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
      const Batch batch = uniform_batch(rng, n, m);
      std::unordered_set<std::size_t> taken(batch.indices.begin(), batch.indices.end());
      const std::size_t swap_in = draw_outside(rng, n, taken);
      std::uniform_int_distribution<std::size_t> pos(0, m - 1);
      std::vector<std::size_t> swapped = batch.indices;
      swapped[pos(rng)] = swap_in;
      taken.insert(swap_in);
      const std::size_t xi = draw_outside(rng, n, taken);

      const BatchSystem sys_a = assemble_batch(disc, batch.indices, config, true);
      const BatchSystem sys_b = assemble_batch(disc, swapped, config, true);
      const StepReport a = proximal_step(disc, center, sys_a, config);
      const StepReport b = proximal_step(disc, center, sys_b, config);
      gaps.push_back(std::abs(single_sample_objective(disc, sys_a, a.state.z, config, xi) -
                              single_sample_objective(disc, sys_b, b.state.z, config, xi)));
    }
    StabilityPoint p;
    p.batch_size = m;
    p.trials = trials;
    double sum = 0.0, sq = 0.0;
    for (double g : gaps) {
      sum += g;
      sq += g * g;
    }
    p.mean_gap = sum / trials;
    const double var = trials > 1 ? std::max(0.0, (sq - trials * p.mean_gap * p.mean_gap) / (trials - 1)) : 0.0;
    p.std_error = std::sqrt(var / trials);
    out.points.push_back(p);
  }

  if (out.points.size() >= 2) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double k = static_cast<double>(out.points.size());
    for (const auto& p : out.points) {
      const double lx = std::log(static_cast<double>(p.batch_size));
      const double ly = std::log(p.mean_gap);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    out.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }
  return out;
}

RateStudyResult rate_study(const Discretization& disc, const SolverConfig& config, const RateStudyConfig& study) {
  if (study.horizons.empty() || study.batch_sizes.empty() || study.seeds < 1) {
    throw InvalidArgument("rate_study: empty study");
  }
  if (std::adjacent_find(study.horizons.begin(), study.horizons.end(), std::greater_equal<>()) !=
          study.horizons.end() ||
      study.horizons.front() < 1) {
    throw InvalidArgument("rate_study: horizons must be positive and strictly increasing");
  }
  const int k_max = study.horizons.back();
  std::vector<std::size_t> all(disc.num_points());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const BatchSystem full = assemble_with_retry(disc, all, config);

  RateStudyResult out;
  out.batch_sizes = study.batch_sizes;
  out.horizons = study.horizons;
  for (std::size_t m : study.batch_sizes) {
    SolverConfig cfg = config;
    cfg.batch_size = m;
    cfg.gamma = study.gamma;
    cfg.sampler = SamplerKind::uniform;
    cfg.validate(disc.num_points());
    std::vector<double> mean(study.horizons.size(), 0.0);
    for (int s = 0; s < study.seeds; ++s) {
      Rng rng(study.base_seed + static_cast<std::uint64_t>(s));
      LatentState state = initial_state(disc, cfg);
      double acc = 0.0;
      std::size_t h = 0;
      for (int k = 1; k <= k_max; ++k) {
        acc += moreau_gradient(disc, full, state, cfg, study.rho).gradient.squaredNorm();
        if (k == study.horizons[h]) {
          mean[h] += acc / k / study.seeds;
          ++h;
        }
        if (k == k_max) break;
        const Batch batch = uniform_batch(rng, disc.num_points(), m);
        const BatchSystem system = assemble_with_retry(disc, batch.indices, cfg);
        state = proximal_step(disc, state, system, cfg).state;
      }
    }
    out.mean_sq_gradient.push_back(std::move(mean));
  }
  return out;
}

}  // namespace mbgp
