#include "mbgp/problems.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mbgp/errors.hpp"
#include "mbgp/reference.hpp"

namespace mbgp {

namespace {

constexpr std::array<int, 0> kNoCoordinates{};
constexpr std::array<int, 1> kEllipticReduced{0};
constexpr std::array<int, 3> kBurgersReduced{0, 2, 3};

void check_index(const CollocationSet& colloc, std::size_t i) {
  if (i >= colloc.size()) {
    throw InvalidArgument("point index " + std::to_string(i) + " out of range (N = " +
                          std::to_string(colloc.size()) + ")");
  }
}

void check_width(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i, Eigen::Index width) {
  const auto expected = static_cast<Eigen::Index>(ops_at(problem, colloc, i).size());
  if (width != expected) {
    throw InvalidArgument("latent block at point " + std::to_string(i) + " has width " + std::to_string(width) +
                          ", expected " + std::to_string(expected));
  }
}

// Uniform point on the perimeter of the unit square.
Point unit_square_boundary(double s) {
  const int side = std::min(3, static_cast<int>(s));
  const double f = s - side;
  switch (side) {
    case 0: return make_point({f, 0.0});
    case 1: return make_point({1.0, f});
    case 2: return make_point({1.0 - f, 1.0});
    default: return make_point({0.0, 1.0 - f});
  }
}

}  // namespace

const char* to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::elliptic: return "elliptic";
    case ProblemKind::burgers: return "burgers";
    case ProblemKind::linear: return "linear";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "elliptic") return ProblemKind::elliptic;
  if (name == "burgers") return ProblemKind::burgers;
  if (name == "linear") return ProblemKind::linear;
  throw InvalidArgument("unknown problem '" + std::string(name) + "'");
}

bool Box::contains(const Point& p) const {
  if (p.size() != lower.size()) return false;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p[a] < lower[a] || p[a] > upper[a]) return false;
  }
  return true;
}

ProblemSpec ProblemSpec::elliptic() {
  ProblemSpec p;
  p.kind = ProblemKind::elliptic;
  p.domain = {make_point({0.0, 0.0}), make_point({1.0, 1.0})};
  p.interior_ops = {DiffOp::identity(), DiffOp::laplacian()};
  p.boundary_ops = {DiffOp::identity()};
  return p;
}

ProblemSpec ProblemSpec::burgers(double viscosity) {
  if (!(viscosity > 0.0)) throw InvalidArgument("Burgers viscosity must be positive");
  ProblemSpec p;
  p.kind = ProblemKind::burgers;
  p.domain = {make_point({0.0, -1.0}), make_point({1.0, 1.0})};
  p.viscosity = viscosity;
  p.interior_ops = {DiffOp::identity(), DiffOp::first(0), DiffOp::first(1), DiffOp::second(1)};
  p.boundary_ops = {DiffOp::identity()};
  return p;
}

ProblemSpec ProblemSpec::linear() {
  ProblemSpec p;
  p.kind = ProblemKind::linear;
  p.domain = {make_point({0.0, 0.0}), make_point({1.0, 1.0})};
  p.interior_ops = {DiffOp::identity()};
  p.boundary_ops = {DiffOp::identity()};
  return p;
}

const Point& CollocationSet::point(std::size_t i) const {
  return i < interior_points.size() ? interior_points[i] : boundary_points[i - interior_points.size()];
}

std::vector<Point> CollocationSet::all_points() const {
  std::vector<Point> pts(interior_points);
  pts.insert(pts.end(), boundary_points.begin(), boundary_points.end());
  return pts;
}

double data_value(const ProblemSpec& problem, const Point& p, bool interior) {
  switch (problem.kind) {
    case ProblemKind::elliptic:
      return interior ? elliptic_forcing(p) : 0.0;
    case ProblemKind::burgers:
      if (interior) return 0.0;
      // Lateral walls carry zero data; the initial slice carries -sin(pi x).
      if (std::abs(p[1]) == 1.0) return 0.0;
      return -std::sin(std::numbers::pi * p[1]);
    case ProblemKind::linear:
      return linear_target(p);
  }
  return 0.0;
}

CollocationSet make_collocation(const ProblemSpec& problem, std::vector<Point> interior,
                                std::vector<Point> boundary) {
  CollocationSet c;
  c.interior_points = std::move(interior);
  c.boundary_points = std::move(boundary);
  c.y.resize(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point& p = c.point(i);
    if (p.size() != problem.dimension() || !problem.domain.contains(p)) {
      throw InvalidArgument("collocation point " + std::to_string(i) + " lies outside the domain");
    }
    c.y[static_cast<Eigen::Index>(i)] = data_value(problem, p, c.is_interior(i));
  }
  return c;
}

CollocationSet sample_collocation(const ProblemSpec& problem, std::size_t n_total, std::size_t n_interior,
                                  std::uint64_t rng_seed) {
  if (n_interior < 1 || n_interior > n_total) {
    throw InvalidArgument("sample_collocation requires 1 <= n_interior <= n_total (got n_interior = " +
                          std::to_string(n_interior) + ", n_total = " + std::to_string(n_total) + ")");
  }
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Point& lo = problem.domain.lower;
  const Point& hi = problem.domain.upper;

  std::vector<Point> interior;
  interior.reserve(n_interior);
  while (interior.size() < n_interior) {
    Point p(lo.size());
    bool open = true;
    for (Eigen::Index a = 0; a < lo.size(); ++a) {
      p[a] = lo[a] + unit(rng) * (hi[a] - lo[a]);
      open = open && p[a] > lo[a] && p[a] < hi[a];
    }
    if (open) interior.push_back(p);
  }

  std::vector<Point> boundary;
  boundary.reserve(n_total - n_interior);
  std::uniform_real_distribution<double> perimeter(0.0, 4.0);
  while (boundary.size() < n_total - n_interior) {
    const double s = perimeter(rng);
    if (problem.kind == ProblemKind::burgers) {
      // {t = 0} x [-1, 1] has length 2, each lateral wall {x = -1}, {x = 1} length 1.
      if (s < 2.0) {
        boundary.push_back(make_point({0.0, -1.0 + s}));
      } else if (s < 3.0) {
        boundary.push_back(make_point({s - 2.0, -1.0}));
      } else {
        boundary.push_back(make_point({s - 3.0, 1.0}));
      }
    } else {
      boundary.push_back(unit_square_boundary(s));
    }
  }
  return make_collocation(problem, std::move(interior), std::move(boundary));
}

std::span<const DiffOp> ops_at(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i) {
  check_index(colloc, i);
  return colloc.is_interior(i) ? std::span<const DiffOp>(problem.interior_ops)
                               : std::span<const DiffOp>(problem.boundary_ops);
}

LatentLayout latent_layout(const ProblemSpec& problem, const CollocationSet& colloc) {
  LatentLayout layout;
  layout.blocks.reserve(colloc.size());
  for (std::size_t i = 0; i < colloc.size(); ++i) {
    const int w = static_cast<int>(ops_at(problem, colloc, i).size());
    layout.blocks.push_back({layout.total, w});
    layout.total += static_cast<std::size_t>(w);
  }
  return layout;
}

std::vector<Functional> build_functionals(const ProblemSpec& problem, const CollocationSet& colloc) {
  std::vector<Functional> phi;
  phi.reserve(latent_layout(problem, colloc).total);
  for (std::size_t i = 0; i < colloc.size(); ++i) {
    for (DiffOp op : ops_at(problem, colloc, i)) phi.push_back({colloc.point(i), op});
  }
  return phi;
}

double residual(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i,
                const Eigen::Ref<const Eigen::VectorXd>& z_i) {
  check_width(problem, colloc, i, z_i.size());
  const double y = colloc.y[static_cast<Eigen::Index>(i)];
  if (!colloc.is_interior(i) || problem.kind == ProblemKind::linear) return z_i[0] - y;
  switch (problem.kind) {
    case ProblemKind::elliptic:
      return -z_i[1] + z_i[0] * z_i[0] * z_i[0] - y;
    case ProblemKind::burgers:
      return z_i[1] + z_i[0] * z_i[2] - problem.viscosity * z_i[3] - y;
    case ProblemKind::linear:
      break;
  }
  return z_i[0] - y;
}

Eigen::VectorXd residual_jacobian(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i,
                                  const Eigen::Ref<const Eigen::VectorXd>& z_i) {
  check_width(problem, colloc, i, z_i.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(z_i.size());
  if (!colloc.is_interior(i) || problem.kind == ProblemKind::linear) {
    g[0] = 1.0;
    return g;
  }
  if (problem.kind == ProblemKind::elliptic) {
    g << 3.0 * z_i[0] * z_i[0], -1.0;
  } else {
    g << z_i[2], 1.0, z_i[0], -problem.viscosity;
  }
  return g;
}

std::span<const int> reduced_coordinates(const ProblemSpec& problem, const CollocationSet& colloc,
                                         std::size_t i) {
  check_index(colloc, i);
  if (!colloc.is_interior(i)) return kNoCoordinates;
  switch (problem.kind) {
    case ProblemKind::elliptic: return kEllipticReduced;
    case ProblemKind::burgers: return kBurgersReduced;
    case ProblemKind::linear: return kNoCoordinates;
  }
  return kNoCoordinates;
}

int reduced_width(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i) {
  return static_cast<int>(reduced_coordinates(problem, colloc, i).size());
}

EliminatedBlock eliminate(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i,
                          const Eigen::Ref<const Eigen::VectorXd>& reduced) {
  const auto coords = reduced_coordinates(problem, colloc, i);
  if (reduced.size() != static_cast<Eigen::Index>(coords.size())) {
    throw InvalidArgument("reduced block at point " + std::to_string(i) + " has width " +
                          std::to_string(reduced.size()) + ", expected " + std::to_string(coords.size()));
  }
  const auto width = static_cast<Eigen::Index>(ops_at(problem, colloc, i).size());
  const double y = colloc.y[static_cast<Eigen::Index>(i)];
  EliminatedBlock b{Eigen::VectorXd::Zero(width), Eigen::MatrixXd::Zero(width, reduced.size())};

  if (coords.empty()) {
    b.full[0] = y;
    return b;
  }
  if (problem.kind == ProblemKind::elliptic) {
    const double u = reduced[0];
    b.full << u, u * u * u - y;
    b.jacobian << 1.0, 3.0 * u * u;
    return b;
  }
  // Burgers interior: reduced (u, u_x, u_xx), full (u, u_t, u_x, u_xx).
  const double nu = problem.viscosity;
  const double u = reduced[0];
  const double ux = reduced[1];
  const double uxx = reduced[2];
  b.full << u, nu * uxx - u * ux + y, ux, uxx;
  b.jacobian << 1.0, 0.0, 0.0,
                -ux, -u, nu,
                0.0, 1.0, 0.0,
                0.0, 0.0, 1.0;
  return b;
}

}  // namespace mbgp
