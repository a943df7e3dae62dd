#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "mbgp/kernels.hpp"

namespace mbgp {

enum class ProblemKind : std::uint8_t {
  elliptic,  // -Laplace(u) + u^3 = f on (0,1)^2, u = 0 on the boundary
  burgers,   // u_t + u u_x - nu u_xx = 0 on (0,1] x (-1,1), coordinates (t, x)
  linear,    // synthetic regression: z_i = g(x_i) observed through the identity
};

const char* to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

struct Box {
  Point lower;
  Point upper;
  bool contains(const Point& p) const;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::elliptic;
  Box domain;
  double viscosity = 0.0;
  std::vector<DiffOp> interior_ops;
  std::vector<DiffOp> boundary_ops;

  static ProblemSpec elliptic();
  static ProblemSpec burgers(double viscosity = 0.2);
  static ProblemSpec linear();

  int dimension() const { return static_cast<int>(domain.lower.size()); }
};

/// Interior points come first in the global point order, then boundary points.
struct CollocationSet {
  std::vector<Point> interior_points;
  std::vector<Point> boundary_points;
  Eigen::VectorXd y;

  std::size_t size() const { return interior_points.size() + boundary_points.size(); }
  std::size_t num_interior() const { return interior_points.size(); }
  bool is_interior(std::size_t i) const { return i < interior_points.size(); }
  const Point& point(std::size_t i) const;
  std::vector<Point> all_points() const;
};

/// PDE or boundary datum at a collocation point.
double data_value(const ProblemSpec& problem, const Point& p, bool interior);

/// Builds the data vector for explicitly supplied points.
CollocationSet make_collocation(const ProblemSpec& problem, std::vector<Point> interior,
                                std::vector<Point> boundary);

CollocationSet sample_collocation(const ProblemSpec& problem, std::size_t n_total, std::size_t n_interior,
                                  std::uint64_t rng_seed);

struct BlockSpan {
  std::size_t offset = 0;
  int width = 0;
};

/// Contiguous point-major partition of the latent vector z.
struct LatentLayout {
  std::vector<BlockSpan> blocks;
  std::size_t total = 0;

  const BlockSpan& operator[](std::size_t i) const { return blocks[i]; }
  std::size_t num_points() const { return blocks.size(); }
};

LatentLayout latent_layout(const ProblemSpec& problem, const CollocationSet& colloc);

std::span<const DiffOp> ops_at(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i);

/// Flattened functional list; entry j corresponds to latent coordinate j.
std::vector<Functional> build_functionals(const ProblemSpec& problem, const CollocationSet& colloc);

/// f_i(z_i) - y_i.
double residual(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i,
                const Eigen::Ref<const Eigen::VectorXd>& z_i);

/// Gradient of residual() with respect to z_i.
Eigen::VectorXd residual_jacobian(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i,
                                  const Eigen::Ref<const Eigen::VectorXd>& z_i);

/// Positions, inside the point's latent block, of the variables kept free
/// after eliminating the PDE/boundary constraint.
std::span<const int> reduced_coordinates(const ProblemSpec& problem, const CollocationSet& colloc,
                                         std::size_t i);
int reduced_width(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i);

struct EliminatedBlock {
  Eigen::VectorXd full;
  Eigen::MatrixXd jacobian;  // d full / d reduced
};

/// Completes a latent block from its reduced variables so that residual() vanishes.
EliminatedBlock eliminate(const ProblemSpec& problem, const CollocationSet& colloc, std::size_t i,
                          const Eigen::Ref<const Eigen::VectorXd>& reduced);

}  // namespace mbgp
