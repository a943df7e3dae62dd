#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mbgp/kernels.hpp"

namespace mbgp {

// Manufactured solution for -Laplace(u) + u^3 = f on (0,1)^2 with u = 0 on the boundary.
double elliptic_true(const Point& x);
double elliptic_laplacian(const Point& x);
double elliptic_forcing(const Point& x);

/// Smooth target for the synthetic linear regression problem.
double linear_target(const Point& x);

/// Viscous Burgers u_t + u u_x = nu u_xx on [0,1] x [-1,1] with u(0,x) = -sin(pi x)
/// and homogeneous Dirichlet data, via the Cole-Hopf integral evaluated by
/// Gauss-Hermite quadrature in the scaled variable.
double burgers_true(double t, double x, double nu, int quad_nodes = 128);

/// Nodes and weights for the weight exp(-s^2) on the real line.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite(int n);

/// Tensor grid over an axis-aligned box, endpoints included. Point order is
/// row-major in the axis list: the last axis varies fastest.
class EvalGrid {
 public:
  EvalGrid(const Point& lower, const Point& upper, std::vector<int> resolution);
  EvalGrid(const Point& lower, const Point& upper, int resolution_per_axis = 100);

  std::size_t size() const { return points_.size(); }
  const std::vector<Point>& points() const { return points_; }
  const std::vector<int>& resolution() const { return resolution_; }

 private:
  std::vector<int> resolution_;
  std::vector<Point> points_;
};

struct ErrorReport {
  double linf = 0.0;
  double relative_l2 = 0.0;
  Eigen::VectorXd pointwise;
};

/// Relative L2 falls back to the absolute L2 norm when the reference is identically zero.
ErrorReport error_report(const Eigen::Ref<const Eigen::VectorXd>& u_numeric,
                         const Eigen::Ref<const Eigen::VectorXd>& u_true);

}  // namespace mbgp
