#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mbgp/diagnostics.hpp"
#include "mbgp/errors.hpp"

namespace mbgp::cli {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::ostream& log_of(const RunOptions& o) { return o.log ? *o.log : std::cerr; }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json config_json(const ExperimentConfig& c) {
  const SolverConfig& s = c.solver;
  json j;
  j["problem"] = {{"name", to_string(c.problem)},
                  {"n_total", c.n_total},
                  {"n_interior", c.n_interior},
                  {"collocation_seed", c.collocation_seed},
                  {"viscosity", c.viscosity}};
  j["kernel"] = {{"lengthscales", c.lengthscales}};
  j["solver"] = {{"eta", s.eta},
                 {"gamma", s.gamma},
                 {"rho", s.rho},
                 {"lambda_reg", s.lambda_reg},
                 {"beta", s.beta},
                 {"nugget_substitution", s.nugget_substitution},
                 {"iterations", s.iterations},
                 {"batch_size", s.batch_size},
                 {"gn_tol", s.gn_tol},
                 {"gn_max_iters", s.gn_max_iters},
                 {"mode", to_string(s.mode)},
                 {"sampler", to_string(s.sampler)},
                 {"clamp_bound", s.clamp_bound ? json(*s.clamp_bound) : json(nullptr)},
                 {"seed", s.seed},
                 {"record_every", s.record_every},
                 {"metric_scaling", s.metric_scaling}};
  if (c.sweep) j["sweep"] = {{"batch_sizes", c.sweep->batch_sizes}, {"realizations", c.sweep->realizations}};
  j["output"] = {{"dir", c.output.dir.string()},
                 {"record_timing", c.output.record_timing},
                 {"grid_resolution", c.output.grid_resolution},
                 {"predict", c.output.predict == PredictMode::full           ? "full"
                             : c.output.predict == PredictMode::neighborhood ? "neighborhood"
                                                                              : "none"}};
  return j;
}

json run_json(const RunResult& r) {
  json j;
  j["seed"] = r.solver.seed;
  j["batch_size"] = r.solver.batch_size;
  j["initial_loss"] = {{"psi_quadratic", number_or_null(r.history.initial_loss.quadratic)},
                       {"psi_misfit", number_or_null(r.history.initial_loss.misfit)}};
  if (r.has_final_loss) {
    j["final_loss"] = {{"psi_quadratic", number_or_null(r.final_loss.quadratic)},
                       {"psi_misfit", number_or_null(r.final_loss.misfit)},
                       {"psi_total", number_or_null(r.final_loss.total())}};
  }
  const auto& last = r.history.records.back();
  j["last_record"] = {{"k", last.k},
                      {"psi_quadratic", number_or_null(last.psi_quadratic)},
                      {"psi_misfit", number_or_null(last.psi_misfit)},
                      {"batch_objective", number_or_null(last.batch_objective)}};
  if (r.errors) j["errors"] = {{"linf", r.errors->linf}, {"relative_l2", r.errors->relative_l2}};
  if (r.final) {
    j["final_solve"] = {{"rho", r.solver.rho},
                        {"gn_iterations", r.final->gn_iterations},
                        {"converged", r.final->converged},
                        {"objective", number_or_null(r.final->objective)}};
  }
  j["flags"] = {{"nonconverged_steps", r.history.nonconverged_steps},
                {"loss_from_batches", r.history.loss_from_batches},
                {"eta_used", r.history.eta_used}};
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::size_t resolve_threads(int requested) {
  if (requested > 0) return static_cast<std::size_t>(requested);
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t k = std::min(threads, n);
  if (k <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

int failure(const std::filesystem::path& dir, const ExperimentConfig& config, const std::string& what,
            const RunOptions& options, int code) {
  log_of(options) << "error: " << what << '\n';
  json j;
  j["status"] = "failed";
  j["partial"] = true;
  j["error"] = what;
  j["config"] = config_json(config);
  j["finished_at"] = utc_now();
  try {
    std::filesystem::create_directories(dir);
    write_json(dir / "summary.json", j);
  } catch (const std::exception&) {
  }
  return code;
}

std::vector<Point> read_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open points file");
  std::vector<Point> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a = 0.0, b = 0.0;
    if (!(ss >> a >> b)) {
      if (lineno == 1) continue;  // header
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected two coordinates");
    }
    pts.push_back(make_point({a, b}));
  }
  return pts;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Setup prepare(const ExperimentConfig& config) {
  const ProblemSpec problem = config.problem_spec();
  CollocationSet colloc = sample_collocation(problem, config.n_total, config.n_interior, config.collocation_seed);
  Setup s{Discretization(problem, std::move(colloc), config.kernel_spec()), std::nullopt, {}};
  std::vector<std::size_t> all(s.disc.num_points());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  try {
    s.full.emplace(assemble_with_retry(s.disc, all, config.solver));
    if (s.full->eta != config.solver.eta && config.solver.nugget_substitution) {
      s.warnings.push_back("full system factorized with eta = " + format_double(s.full->eta) + " after a retry");
    }
  } catch (const NumericalConditioning& e) {
    s.warnings.push_back(std::string(e.what()) + "; loss recorded from batch systems and the final solve skipped");
  }
  return s;
}

double true_solution(const ExperimentConfig& config, const Point& x) {
  switch (config.problem) {
    case ProblemKind::elliptic: return elliptic_true(x);
    case ProblemKind::burgers: return burgers_true(x[0], x[1], config.viscosity);
    case ProblemKind::linear: return linear_target(x);
  }
  return 0.0;
}

GridData make_grid(const ExperimentConfig& config, const Setup& setup) {
  const Box& box = setup.disc.problem.domain;
  GridData g{EvalGrid(box.lower, box.upper, config.output.grid_resolution), {}};
  g.u_true.resize(static_cast<Eigen::Index>(g.grid.size()));
  for (std::size_t i = 0; i < g.grid.size(); ++i) {
    g.u_true[static_cast<Eigen::Index>(i)] = true_solution(config, g.grid.points()[i]);
  }
  return g;
}

RunResult execute_run(const Setup& setup, const ExperimentConfig& config, const SolverConfig& solver,
                      const GridData* grid) {
  RunResult r;
  r.solver = solver;
  const BatchSystem* full = setup.full ? &*setup.full : nullptr;
  r.history = run(setup.disc, solver, full);
  if (full) {
    r.final_loss = full_loss(setup.disc, *full, r.history.final_state, solver);
    r.has_final_loss = true;
  }
  if (!grid || config.output.predict == PredictMode::none) return r;

  const auto& pts = grid->grid.points();
  if (config.output.predict == PredictMode::full && full) {
    r.final = final_solve(setup.disc, *full, r.history.final_state, solver, solver.rho);
    r.u_num = predict_full(setup.disc, *r.final, pts);
  } else {
    const SpatialIndex index = make_index(setup.disc, solver);
    r.u_num = predict_neighborhood(setup.disc, index, r.history.final_state, solver, pts);
  }
  r.errors = error_report(r.u_num, grid->u_true);
  return r;
}

void write_loss_history(const std::filesystem::path& path, const RunHistory& history, bool record_timing) {
  auto out = open_out(path);
  out << "iteration,psi_quadratic,psi_misfit,batch_objective,gn_iters,wall_ms\n";
  for (const auto& r : history.records) {
    out << r.k << ',' << format_double(r.psi_quadratic) << ',' << format_double(r.psi_misfit) << ','
        << format_double(r.batch_objective) << ',' << r.gn_iters << ','
        << format_double(record_timing ? r.wall_ms : 0.0) << '\n';
  }
}

void write_error_grid(const std::filesystem::path& path, const EvalGrid& grid, const Eigen::VectorXd& u_true,
                      const Eigen::VectorXd& u_num, const Eigen::VectorXd& abs_err) {
  auto out = open_out(path);
  out << "x1,x2,u_true,u_num,abs_err\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    const Point& p = grid.points()[i];
    out << format_double(p[0]) << ',' << format_double(p[1]) << ',' << format_double(u_true[j]) << ','
        << format_double(u_num[j]) << ',' << format_double(abs_err[j]) << '\n';
  }
}

void write_checks(const std::filesystem::path& path, const std::vector<CheckRow>& rows) {
  auto out = open_out(path);
  out << "name,measured,threshold,pass\n";
  for (const auto& r : rows) {
    out << r.name << ',' << format_double(r.measured) << ',' << format_double(r.threshold) << ','
        << (r.pass ? "true" : "false") << '\n';
  }
}

int run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  if (options.dry_run) {
    (options.log ? *options.log : std::cout) << echo_config(config);
    return kSuccess;
  }
  const auto& dir = config.output.dir;
  const std::string started = utc_now();
  const auto t0 = Clock::now();
  try {
    std::filesystem::create_directories(dir);
    const Setup setup = prepare(config);
    for (const auto& w : setup.warnings) log_of(options) << "warning: " << w << '\n';
    std::optional<GridData> grid;
    if (config.output.predict != PredictMode::none) grid.emplace(make_grid(config, setup));
    const RunResult r = execute_run(setup, config, config.solver, grid ? &*grid : nullptr);

    write_loss_history(dir / "loss_history.csv", r.history, config.output.record_timing);
    if (r.errors) write_error_grid(dir / "error_grid.csv", grid->grid, grid->u_true, r.u_num, r.errors->pointwise);

    json j;
    j["status"] = "ok";
    j["partial"] = false;
    j["config"] = config_json(config);
    j["run"] = run_json(r);
    j["warnings"] = setup.warnings;
    j["started_at"] = started;
    j["finished_at"] = utc_now();
    j["wall_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
    write_json(dir / "summary.json", j);
    log_of(options) << "wrote " << (dir / "loss_history.csv").string() << '\n';
    return kSuccess;
  } catch (const NumericalConditioning& e) {
    return failure(dir, config, e.what(), options, kNumericalFailure);
  } catch (const InvalidArgument& e) {
    return failure(dir, config, e.what(), options, kConfigError);
  }
}

int run_sweep(const ExperimentConfig& config, const RunOptions& options) {
  if (options.dry_run) {
    (options.log ? *options.log : std::cout) << echo_config(config);
    return kSuccess;
  }
  const SweepSettings sweep = config.sweep.value_or(SweepSettings{{config.solver.batch_size}, 10});
  const auto& dir = config.output.dir;
  const std::string started = utc_now();
  const auto t0 = Clock::now();
  try {
    std::filesystem::create_directories(dir);
    const Setup setup = prepare(config);
    for (const auto& w : setup.warnings) log_of(options) << "warning: " << w << '\n';
    std::optional<GridData> grid;
    if (config.output.predict != PredictMode::none) grid.emplace(make_grid(config, setup));

    const std::size_t n_m = sweep.batch_sizes.size();
    const auto n_r = static_cast<std::size_t>(sweep.realizations);
    std::vector<RunResult> results(n_m * n_r);
    std::mutex log_mutex;
    parallel_for(results.size(), resolve_threads(options.threads), [&](std::size_t t) {
      SolverConfig s = config.solver;
      s.batch_size = sweep.batch_sizes[t / n_r];
      s.seed = config.solver.seed + t % n_r;
      results[t] = execute_run(setup, config, s, grid ? &*grid : nullptr);
      std::lock_guard lock(log_mutex);
      log_of(options) << "M = " << s.batch_size << ", realization " << t % n_r << " done\n";
    });

    {
      auto out = open_out(dir / "sweep_runs.csv");
      out << "batch_size,realization,seed,psi_quadratic,psi_misfit,psi_total,linf,relative_l2,nonconverged_steps\n";
      for (std::size_t t = 0; t < results.size(); ++t) {
        const RunResult& r = results[t];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const LossParts loss = r.has_final_loss ? r.final_loss
                                                : LossParts{r.history.records.back().psi_quadratic,
                                                            r.history.records.back().psi_misfit};
        out << r.solver.batch_size << ',' << t % n_r << ',' << r.solver.seed << ',' << format_double(loss.quadratic)
            << ',' << format_double(loss.misfit) << ',' << format_double(loss.total()) << ','
            << format_double(r.errors ? r.errors->linf : nan) << ','
            << format_double(r.errors ? r.errors->relative_l2 : nan) << ',' << r.history.nonconverged_steps
            << '\n';
      }
    }
    {
      auto out = open_out(dir / "sweep_loss_mean.csv");
      out << "iteration";
      for (std::size_t m : sweep.batch_sizes) out << ",loss_M" << m;
      out << '\n';
      for (int k = 0; k < config.solver.iterations; ++k) {
        out << k + 1;
        for (std::size_t im = 0; im < n_m; ++im) {
          double sum = 0.0;
          for (std::size_t r = 0; r < n_r; ++r) {
            const auto& rec = results[im * n_r + r].history.records[static_cast<std::size_t>(k)];
            sum += rec.psi_quadratic + rec.psi_misfit;
          }
          out << ',' << format_double(sum / static_cast<double>(n_r));
        }
        out << '\n';
      }
    }

    json per_m = json::array();
    for (std::size_t im = 0; im < n_m; ++im) {
      json runs = json::array();
      double loss_sum = 0.0, linf_sum = 0.0, l2_sum = 0.0;
      for (std::size_t r = 0; r < n_r; ++r) {
        const RunResult& res = results[im * n_r + r];
        runs.push_back(run_json(res));
        loss_sum += res.has_final_loss ? res.final_loss.total()
                                       : res.history.records.back().psi_quadratic +
                                             res.history.records.back().psi_misfit;
        if (res.errors) {
          linf_sum += res.errors->linf;
          l2_sum += res.errors->relative_l2;
        }
      }
      const double nr = static_cast<double>(n_r);
      json entry = {{"batch_size", sweep.batch_sizes[im]},
                    {"mean_final_loss", number_or_null(loss_sum / nr)},
                    {"runs", runs}};
      if (grid) {
        entry["mean_linf"] = linf_sum / nr;
        entry["mean_relative_l2"] = l2_sum / nr;
        Eigen::VectorXd u_mean = Eigen::VectorXd::Zero(grid->u_true.size());
        Eigen::VectorXd err_mean = Eigen::VectorXd::Zero(grid->u_true.size());
        for (std::size_t r = 0; r < n_r; ++r) {
          const RunResult& res = results[im * n_r + r];
          u_mean += res.u_num / nr;
          err_mean += res.errors->pointwise / nr;
        }
        write_error_grid(dir / ("error_grid_M" + std::to_string(sweep.batch_sizes[im]) + ".csv"), grid->grid,
                         grid->u_true, u_mean, err_mean);
      }
      per_m.push_back(entry);
    }
    json j;
    j["status"] = "ok";
    j["partial"] = false;
    j["config"] = config_json(config);
    j["sweep"] = per_m;
    j["warnings"] = setup.warnings;
    j["started_at"] = started;
    j["finished_at"] = utc_now();
    j["wall_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
    write_json(dir / "summary.json", j);
    return kSuccess;
  } catch (const NumericalConditioning& e) {
    return failure(dir, config, e.what(), options, kNumericalFailure);
  } catch (const InvalidArgument& e) {
    return failure(dir, config, e.what(), options, kConfigError);
  }
}

std::vector<CheckRow> diagnostic_checks(const ExperimentConfig& config) {
  const DiagnosticsSettings& d = config.diagnostics;
  std::vector<CheckRow> rows;
  auto add = [&](std::string name, double measured, double threshold, bool pass) {
    rows.push_back({std::move(name), measured, threshold, pass});
  };

  // Sampling-operator identity on random Gram matrices.
  {
    Rng rng(config.collocation_seed);
    std::uniform_int_distribution<int> size(2, 20);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const KernelSpec k = KernelSpec::isotropic(0.2, 2);
    double worst = 0.0;
    for (int t = 0; t < d.identity_trials; ++t) {
      const int n = size(rng);
      std::vector<Functional> fs;
      for (int i = 0; i < n; ++i) fs.push_back({make_point({u(rng), u(rng)}), DiffOp::identity()});
      const Eigen::MatrixXd g = gram(k, fs);
      for (double gamma : {1e-3, 1.0, 1e3}) worst = std::max(worst, sampling_identity_residual(g, gamma));
    }
    add("sampling_identity_max_residual", worst, 1e-8, worst <= 1e-8);
  }

  // Closed-form kernel entries against central differences.
  for (const KernelSpec& k : {KernelSpec::isotropic(0.2, 2), KernelSpec::anisotropic({0.3, 0.05})}) {
    const double err = kernel_consistency_error(k, d.fd_draws, config.collocation_seed + 1);
    add(k.family() == KernelFamily::gaussian_isotropic ? "kernel_fd_isotropic" : "kernel_fd_anisotropic", err, 1e-5,
        err <= 1e-5);
  }

  // Weak convexity of the cubic residual with mu = U_f H_f.
  {
    const double c = 2.0 * std::numbers::pi * std::numbers::pi + 1.0;
    const WeakConvexityCheck w = weak_convexity_check(c, 3.0);
    add("weak_convexity_min_second_difference", w.min_second_difference, -1e-6, w.min_second_difference >= -1e-6);
  }

  const ProblemSpec linear = ProblemSpec::linear();
  SolverConfig lin;
  lin.mode = SolveMode::penalty;
  lin.sampler = SamplerKind::uniform;
  lin.nugget_substitution = false;
  lin.lambda_reg = config.solver.lambda_reg;
  lin.beta = config.solver.beta;
  lin.gn_tol = 1e-10;
  lin.gn_max_iters = 50;

  // Moreau envelope gradient against central differences on a 5-point elliptic toy.
  {
    const ProblemSpec ell = ProblemSpec::elliptic();
    const CollocationSet toy = sample_collocation(ell, 5, 3, config.collocation_seed + 2);
    const Discretization disc(ell, toy, KernelSpec::isotropic(0.2, 2));
    SolverConfig s = lin;
    s.nugget_substitution = true;
    s.eta = 1e-6;
    s.gn_tol = 1e-13;
    s.gn_max_iters = 200;
    std::vector<std::size_t> all{0, 1, 2, 3, 4};
    const BatchSystem full = assemble_batch(disc, all, s);
    const double rho = 50.0;
    Rng rng(config.collocation_seed + 3);
    std::normal_distribution<double> normal;
    LatentState bar = initial_state(disc, s);
    for (Eigen::Index i = 0; i < bar.z.size(); ++i) bar.z[i] += 0.1 * normal(rng);
    const MoreauResult g = moreau_gradient(disc, full, bar, s, rho);
    double worst = 0.0;
    const double h = 1e-5;
    for (int t = 0; t < 10; ++t) {
      Eigen::VectorXd dir(bar.z.size());
      for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = normal(rng);
      dir.normalize();
      LatentState plus = bar, minus = bar;
      plus.z += h * dir;
      minus.z -= h * dir;
      const double fd = (moreau_gradient(disc, full, plus, s, rho).envelope -
                         moreau_gradient(disc, full, minus, s, rho).envelope) / (2.0 * h);
      const double exact = g.gradient.dot(dir);
      worst = std::max(worst, std::abs(fd - exact) / std::max(std::abs(exact), 1e-8));
    }
    add("moreau_gradient_fd_relative_error", worst, 1e-4, worst <= 1e-4);
  }

  // Swap-one stability against batch size.
  {
    const CollocationSet colloc =
        sample_collocation(linear, d.n_points, std::max<std::size_t>(1, d.n_points * 3 / 4), config.collocation_seed);
    const Discretization disc(linear, colloc, KernelSpec::isotropic(0.2, 2));
    const StabilityResult st =
        stability_probe(disc, lin, d.stability_batch_sizes, d.stability_trials, config.collocation_seed + 4);
    for (const auto& p : st.points) {
      add("stability_mean_gap_M" + std::to_string(p.batch_size), p.mean_gap, 0.0, std::isfinite(p.mean_gap));
    }
    add("stability_loglog_slope", st.slope, -0.5, st.slope >= -1.5 && st.slope <= -0.5);
  }

  // Envelope-gradient rate against K and M.
  {
    const CollocationSet colloc = sample_collocation(
        linear, d.rate_points, std::max<std::size_t>(1, d.rate_points * 3 / 4), config.collocation_seed + 5);
    const Discretization disc(linear, colloc, KernelSpec::isotropic(0.2, 2));
    RateStudyConfig study;
    study.batch_sizes = d.rate_batch_sizes;
    study.horizons = d.rate_horizons;
    study.seeds = d.rate_seeds;
    study.gamma = d.rate_gamma;
    study.rho = d.rate_rho;
    study.base_seed = config.collocation_seed;
    const RateStudyResult rs = rate_study(disc, lin, study);
    for (std::size_t im = 0; im < rs.batch_sizes.size(); ++im) {
      const auto& v = rs.mean_sq_gradient[im];
      for (std::size_t h = 0; h < v.size(); ++h) {
        add("rate_M" + std::to_string(rs.batch_sizes[im]) + "_K" + std::to_string(rs.horizons[h]), v[h], 0.0,
            std::isfinite(v[h]));
      }
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t h = 1; h < v.size(); ++h) worst = std::max(worst, v[h] / v[h - 1]);
      add("rate_M" + std::to_string(rs.batch_sizes[im]) + "_max_ratio_over_K", worst, 1.0, worst <= 1.0);
    }
    for (std::size_t im = 1; im < rs.batch_sizes.size(); ++im) {
      const double ratio = rs.mean_sq_gradient[im].back() / rs.mean_sq_gradient[im - 1].back();
      add("rate_plateau_ratio_M" + std::to_string(rs.batch_sizes[im]) + "_over_M" +
              std::to_string(rs.batch_sizes[im - 1]),
          ratio, 1.0, ratio < 1.0);
    }
  }
  return rows;
}

int run_diagnostics(const ExperimentConfig& config, const RunOptions& options) {
  if (options.dry_run) {
    (options.log ? *options.log : std::cout) << echo_config(config);
    return kSuccess;
  }
  const auto& dir = config.output.dir;
  try {
    std::filesystem::create_directories(dir);
    const std::vector<CheckRow> rows = diagnostic_checks(config);
    write_checks(dir / "diagnostics.csv", rows);
    bool ok = true;
    for (const auto& r : rows) {
      log_of(options) << (r.pass ? "PASS " : "FAIL ") << r.name << " = " << format_double(r.measured) << '\n';
      ok = ok && r.pass;
    }
    return ok ? kSuccess : kCheckFailure;
  } catch (const NumericalConditioning& e) {
    return failure(dir, config, e.what(), options, kNumericalFailure);
  } catch (const InvalidArgument& e) {
    return failure(dir, config, e.what(), options, kConfigError);
  }
}

int run_predict(const ExperimentConfig& config, const std::filesystem::path& points_csv, PredictStrategy strategy,
                const RunOptions& options) {
  const std::vector<Point> pts = read_points(points_csv);
  if (options.dry_run) {
    (options.log ? *options.log : std::cout) << echo_config(config);
    return kSuccess;
  }
  const auto& dir = config.output.dir;
  try {
    std::filesystem::create_directories(dir);
    for (const Point& p : pts) {
      if (!config.problem_spec().domain.contains(p)) {
        throw InvalidArgument("prediction point outside the problem domain");
      }
    }
    const Setup setup = prepare(config);
    for (const auto& w : setup.warnings) log_of(options) << "warning: " << w << '\n';
    ExperimentConfig no_grid = config;
    no_grid.output.predict = PredictMode::none;
    const RunResult r = execute_run(setup, no_grid, config.solver, nullptr);
    Eigen::VectorXd u;
    if (strategy == PredictStrategy::full) {
      if (!setup.full) throw NumericalConditioning("full system unavailable for full-strategy prediction", 0.0);
      const FinalSolution sol = final_solve(setup.disc, *setup.full, r.history.final_state, config.solver,
                                            config.solver.rho);
      u = predict_full(setup.disc, sol, pts);
    } else {
      const SpatialIndex index = make_index(setup.disc, config.solver);
      u = predict_neighborhood(setup.disc, index, r.history.final_state, config.solver, pts);
    }
    auto out = open_out(dir / "predictions.csv");
    out << "x1,x2,u_num,u_true\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out << format_double(pts[i][0]) << ',' << format_double(pts[i][1]) << ','
          << format_double(u[static_cast<Eigen::Index>(i)]) << ',' << format_double(true_solution(config, pts[i]))
          << '\n';
    }
    return kSuccess;
  } catch (const NumericalConditioning& e) {
    return failure(dir, config, e.what(), options, kNumericalFailure);
  } catch (const InvalidArgument& e) {
    return failure(dir, config, e.what(), options, kConfigError);
  }
}

}  // namespace mbgp::cli
