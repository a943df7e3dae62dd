#include "experiment_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mbgp/errors.hpp"

namespace mbgp::cli {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"problem", {"name", "n_total", "n_interior", "collocation_seed", "viscosity"}},
      {"kernel", {"lengthscales", "sigma"}},
      {"solver",
       {"eta", "gamma", "rho", "lambda_reg", "beta", "nugget_substitution", "iterations", "batch_size", "gn_tol",
        "gn_max_iters", "mode", "sampler", "clamp_bound", "seed", "record_every", "metric_scaling"}},
      {"sweep", {"batch_sizes", "realizations"}},
      {"output", {"dir", "record_timing", "grid_resolution", "predict"}},
      {"diagnostics",
       {"n_points", "stability_batch_sizes", "stability_trials", "rate_points", "rate_batch_sizes",
        "rate_horizons", "rate_seeds", "rate_gamma", "rate_rho", "fd_draws", "identity_trials"}},
  };
  return keys;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[noreturn]] void fail(const std::string& key, const std::string& reason) { throw ConfigError(key + ": " + reason); }

// Typed access to one [group] of the parsed tree.
class Group {
 public:
  Group(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (!tree_) return std::nullopt;
    auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }
  std::string path(const std::string& key) const { return name_ + "." + key; }

  template <typename T>
  std::optional<T> number(const std::string& key) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    return parse_number<T>(*s, path(key));
  }

  std::optional<bool> boolean(const std::string& key) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    const std::string v = lower(*s);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(path(key), "expected a boolean, got '" + *s + "'");
  }

  template <typename T>
  std::optional<std::vector<T>> list(const std::string& key) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    std::vector<T> out;
    std::stringstream ss(*s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(trim(item), path(key)));
    if (out.empty()) fail(path(key), "empty list");
    return out;
  }

  template <typename T>
  static T parse_number(const std::string& s, const std::string& key) {
    T value{};
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && s[0] == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || s.empty()) fail(key, "cannot parse '" + s + "' as a number");
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(value)) fail(key, "must be finite");
    }
    return value;
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

template <typename T>
void set_if(T& target, const std::optional<T>& v) {
  if (v) target = *v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

const char* to_string(PredictMode m) {
  switch (m) {
    case PredictMode::full: return "full";
    case PredictMode::neighborhood: return "neighborhood";
    case PredictMode::none: return "none";
  }
  return "full";
}

ExperimentConfig build(const pt::ptree& root) {
  for (const auto& [section, body] : root) {
    const auto it = allowed_keys().find(section);
    if (it == allowed_keys().end()) fail(section, "unknown group");
    if (!body.data().empty() && body.empty()) fail(section, "expected a [group] header");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) fail(section + "." + key, "unknown key");
    }
  }
  auto group = [&](const std::string& name) {
    auto child = root.get_child_optional(name);
    return Group(child ? &*child : nullptr, name);
  };
  const Group problem = group("problem");
  const Group kernel = group("kernel");
  const Group solver = group("solver");
  const Group sweep = group("sweep");
  const Group output = group("output");
  const Group diag = group("diagnostics");

  ExperimentConfig c;
  const auto name = problem.raw("name");
  if (!name) fail("problem.name", "required");
  try {
    c.problem = parse_problem_kind(*name);
  } catch (const InvalidArgument&) {
    fail("problem.name", "expected elliptic, burgers or linear, got '" + *name + "'");
  }

  // Problem-specific defaults.
  SolverConfig& s = c.solver;
  switch (c.problem) {
    case ProblemKind::elliptic:
      c.lengthscales = {0.2};
      s.eta = 1e-13;
      s.gn_max_iters = 30;
      break;
    case ProblemKind::burgers:
      c.lengthscales = {0.3, 0.05};
      s.eta = 1e-10;
      s.gn_max_iters = 100;
      break;
    case ProblemKind::linear:
      c.lengthscales = {0.2};
      s.mode = SolveMode::penalty;
      s.sampler = SamplerKind::uniform;
      s.nugget_substitution = false;
      break;
  }

  const auto n_total = problem.number<std::size_t>("n_total");
  if (!n_total) fail("problem.n_total", "required");
  c.n_total = *n_total;
  if (c.n_total < 1) fail("problem.n_total", "must be at least 1");
  if (c.problem == ProblemKind::burgers) {
    c.n_interior = c.n_total * 5 / 6;
  } else {
    c.n_interior = c.n_total * 3 / 4;
  }
  c.n_interior = std::max<std::size_t>(1, c.n_interior);
  set_if(c.n_interior, problem.number<std::size_t>("n_interior"));
  if (c.n_interior < 1 || c.n_interior > c.n_total) fail("problem.n_interior", "must lie in [1, n_total]");
  set_if(c.collocation_seed, problem.number<std::uint64_t>("collocation_seed"));
  set_if(c.viscosity, problem.number<double>("viscosity"));
  if (!(c.viscosity > 0.0)) fail("problem.viscosity", "must be positive");

  if (auto sigma = kernel.number<double>("sigma")) {
    if (kernel.raw("lengthscales")) fail("kernel.sigma", "give either sigma or lengthscales, not both");
    c.lengthscales = {*sigma};
  }
  set_if(c.lengthscales, kernel.list<double>("lengthscales"));
  for (double l : c.lengthscales) {
    if (!(l > 0.0)) fail("kernel.lengthscales", "must be positive");
  }
  const std::size_t dim = 2;
  if (c.lengthscales.size() != 1 && c.lengthscales.size() != dim) {
    fail("kernel.lengthscales", "expected 1 or " + std::to_string(dim) + " values");
  }

  set_if(s.eta, solver.number<double>("eta"));
  set_if(s.gamma, solver.number<double>("gamma"));
  s.rho = s.gamma;
  set_if(s.rho, solver.number<double>("rho"));
  set_if(s.lambda_reg, solver.number<double>("lambda_reg"));
  set_if(s.beta, solver.number<double>("beta"));
  set_if(s.nugget_substitution, solver.boolean("nugget_substitution"));
  set_if(s.iterations, solver.number<int>("iterations"));
  set_if(s.batch_size, solver.number<std::size_t>("batch_size"));
  set_if(s.gn_tol, solver.number<double>("gn_tol"));
  set_if(s.gn_max_iters, solver.number<int>("gn_max_iters"));
  if (auto m = solver.raw("mode")) {
    try {
      s.mode = parse_solve_mode(lower(*m));
    } catch (const InvalidArgument&) {
      fail("solver.mode", "expected elimination or penalty, got '" + *m + "'");
    }
  }
  if (auto m = solver.raw("sampler")) {
    try {
      s.sampler = parse_sampler_kind(lower(*m));
    } catch (const InvalidArgument&) {
      fail("solver.sampler", "expected neighborhood or uniform, got '" + *m + "'");
    }
  }
  if (auto b = solver.raw("clamp_bound")) {
    if (lower(*b) == "none") {
      s.clamp_bound.reset();
    } else {
      s.clamp_bound = Group::parse_number<double>(*b, "solver.clamp_bound");
    }
  }
  set_if(s.seed, solver.number<std::uint64_t>("seed"));
  set_if(s.record_every, solver.number<int>("record_every"));
  set_if(s.metric_scaling, solver.boolean("metric_scaling"));
  try {
    s.validate(c.n_total);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (c.problem == ProblemKind::linear && s.mode == SolveMode::elimination) {
    fail("solver.mode", "the linear problem is fully determined under elimination; use penalty");
  }

  if (sweep.raw("batch_sizes") || sweep.raw("realizations")) {
    SweepSettings sw;
    sw.batch_sizes = {s.batch_size};
    set_if(sw.batch_sizes, sweep.list<std::size_t>("batch_sizes"));
    set_if(sw.realizations, sweep.number<int>("realizations"));
    for (std::size_t m : sw.batch_sizes) {
      if (m < 1 || m > c.n_total) fail("sweep.batch_sizes", "each batch size must lie in [1, n_total]");
    }
    if (sw.realizations < 1) fail("sweep.realizations", "must be at least 1");
    c.sweep = sw;
  }

  if (auto d = output.raw("dir")) c.output.dir = *d;
  set_if(c.output.record_timing, output.boolean("record_timing"));
  set_if(c.output.grid_resolution, output.number<int>("grid_resolution"));
  if (c.output.grid_resolution < 2) fail("output.grid_resolution", "must be at least 2");
  if (auto p = output.raw("predict")) {
    const std::string v = lower(*p);
    if (v == "full") {
      c.output.predict = PredictMode::full;
    } else if (v == "neighborhood") {
      c.output.predict = PredictMode::neighborhood;
    } else if (v == "none") {
      c.output.predict = PredictMode::none;
    } else {
      fail("output.predict", "expected full, neighborhood or none, got '" + *p + "'");
    }
  }

  DiagnosticsSettings& g = c.diagnostics;
  set_if(g.n_points, diag.number<std::size_t>("n_points"));
  set_if(g.stability_batch_sizes, diag.list<std::size_t>("stability_batch_sizes"));
  set_if(g.stability_trials, diag.number<int>("stability_trials"));
  set_if(g.rate_points, diag.number<std::size_t>("rate_points"));
  set_if(g.rate_batch_sizes, diag.list<std::size_t>("rate_batch_sizes"));
  set_if(g.rate_horizons, diag.list<int>("rate_horizons"));
  set_if(g.rate_seeds, diag.number<int>("rate_seeds"));
  set_if(g.rate_gamma, diag.number<double>("rate_gamma"));
  set_if(g.rate_rho, diag.number<double>("rate_rho"));
  set_if(g.fd_draws, diag.number<int>("fd_draws"));
  set_if(g.identity_trials, diag.number<int>("identity_trials"));
  for (std::size_t m : g.stability_batch_sizes) {
    if (m < 1 || m + 2 > g.n_points) fail("diagnostics.stability_batch_sizes", "each must lie in [1, n_points - 2]");
  }
  for (std::size_t m : g.rate_batch_sizes) {
    if (m < 1 || m > g.rate_points) fail("diagnostics.rate_batch_sizes", "each must lie in [1, rate_points]");
  }
  if (!std::is_sorted(g.rate_horizons.begin(), g.rate_horizons.end()) ||
      std::adjacent_find(g.rate_horizons.begin(), g.rate_horizons.end()) != g.rate_horizons.end() ||
      g.rate_horizons.front() < 1) {
    fail("diagnostics.rate_horizons", "must be positive and strictly increasing");
  }
  if (g.stability_trials < 2) fail("diagnostics.stability_trials", "must be at least 2");
  if (g.rate_seeds < 1) fail("diagnostics.rate_seeds", "must be at least 1");
  if (!(g.rate_gamma > 0.0)) fail("diagnostics.rate_gamma", "must be positive");
  if (!(g.rate_rho > 0.0)) fail("diagnostics.rate_rho", "must be positive");
  if (g.fd_draws < 1) fail("diagnostics.fd_draws", "must be at least 1");
  if (g.identity_trials < 1) fail("diagnostics.identity_trials", "must be at least 1");
  return c;
}

}  // namespace

ProblemSpec ExperimentConfig::problem_spec() const {
  switch (problem) {
    case ProblemKind::elliptic: return ProblemSpec::elliptic();
    case ProblemKind::burgers: return ProblemSpec::burgers(viscosity);
    case ProblemKind::linear: return ProblemSpec::linear();
  }
  return ProblemSpec::elliptic();
}

KernelSpec ExperimentConfig::kernel_spec() const {
  if (lengthscales.size() == 1) return KernelSpec::isotropic(lengthscales[0], 2);
  return KernelSpec::anisotropic(lengthscales);
}

ExperimentConfig parse_config_text(const std::string& text) {
  pt::ptree root;
  std::istringstream in(text);
  try {
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("parse error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  return build(root);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string echo_config(const ExperimentConfig& c) {
  const SolverConfig& s = c.solver;
  std::ostringstream o;
  o << "[problem]\n"
    << "name = " << to_string(c.problem) << "\n"
    << "n_total = " << c.n_total << "\n"
    << "n_interior = " << c.n_interior << "\n"
    << "collocation_seed = " << c.collocation_seed << "\n"
    << "viscosity = " << fmt(c.viscosity) << "\n\n"
    << "[kernel]\n"
    << "lengthscales = " << join(c.lengthscales) << "\n\n"
    << "[solver]\n"
    << "eta = " << fmt(s.eta) << "\n"
    << "gamma = " << fmt(s.gamma) << "\n"
    << "rho = " << fmt(s.rho) << "\n"
    << "lambda_reg = " << fmt(s.lambda_reg) << "\n"
    << "beta = " << fmt(s.beta) << "\n"
    << "nugget_substitution = " << (s.nugget_substitution ? "true" : "false") << "\n"
    << "iterations = " << s.iterations << "\n"
    << "batch_size = " << s.batch_size << "\n"
    << "gn_tol = " << fmt(s.gn_tol) << "\n"
    << "gn_max_iters = " << s.gn_max_iters << "\n"
    << "mode = " << to_string(s.mode) << "\n"
    << "sampler = " << to_string(s.sampler) << "\n"
    << "clamp_bound = " << (s.clamp_bound ? fmt(*s.clamp_bound) : std::string("none")) << "\n"
    << "seed = " << s.seed << "\n"
    << "record_every = " << s.record_every << "\n"
    << "metric_scaling = " << (s.metric_scaling ? "true" : "false") << "\n\n";
  if (c.sweep) {
    o << "[sweep]\n"
      << "batch_sizes = " << join(c.sweep->batch_sizes) << "\n"
      << "realizations = " << c.sweep->realizations << "\n\n";
  }
  o << "[output]\n"
    << "dir = " << c.output.dir.string() << "\n"
    << "record_timing = " << (c.output.record_timing ? "true" : "false") << "\n"
    << "grid_resolution = " << c.output.grid_resolution << "\n"
    << "predict = " << to_string(c.output.predict) << "\n\n";
  const DiagnosticsSettings& g = c.diagnostics;
  o << "[diagnostics]\n"
    << "n_points = " << g.n_points << "\n"
    << "stability_batch_sizes = " << join(g.stability_batch_sizes) << "\n"
    << "stability_trials = " << g.stability_trials << "\n"
    << "rate_points = " << g.rate_points << "\n"
    << "rate_batch_sizes = " << join(g.rate_batch_sizes) << "\n"
    << "rate_horizons = " << join(g.rate_horizons) << "\n"
    << "rate_seeds = " << g.rate_seeds << "\n"
    << "rate_gamma = " << fmt(g.rate_gamma) << "\n"
    << "rate_rho = " << fmt(g.rate_rho) << "\n"
    << "fd_draws = " << g.fd_draws << "\n"
    << "identity_trials = " << g.identity_trials << "\n";
  return o.str();
}

}  // namespace mbgp::cli
