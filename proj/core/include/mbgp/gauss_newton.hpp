#pragma once

#include <functional>
#include <optional>

#include <Eigen/Core>

#include "mbgp/linalg.hpp"

namespace mbgp {

/// Objective over free variables r:
///
///   J(r) = q/2 w(r)^T A^{-1} w(r) + m/2 |e(w(r))|^2 + p/2 |r - c|^2
///
/// where w lifts r to the stacked latent vector, e is the (optional) vector of
/// PDE residuals and A is available through its Cholesky factor.
struct ReducedObjective {
  /// w(r) and, when the pointer is non-null, dw/dr.
  std::function<void(const Eigen::VectorXd& r, Eigen::VectorXd& w, Eigen::MatrixXd* jac)> lift;
  /// e(w) and, when the pointer is non-null, de/dw. Leave empty when there is no misfit term.
  std::function<void(const Eigen::VectorXd& w, Eigen::VectorXd& e, Eigen::MatrixXd* jac)> misfit;

  const Cholesky* factor = nullptr;
  double quad_weight = 1.0;
  double misfit_weight = 0.0;
  double prox_weight = 0.0;
  Eigen::VectorXd center;
  std::optional<double> clamp;  // box radius applied to r

  struct Parts {
    double quadratic = 0.0;  // q/2 w^T A^{-1} w
    double misfit = 0.0;     // m/2 |e|^2
    double prox = 0.0;       // p/2 |r - c|^2
    double total() const { return quadratic + misfit + prox; }
  };
  Parts evaluate(const Eigen::VectorXd& r) const;
  Eigen::VectorXd project(Eigen::VectorXd r) const;
};

struct GaussNewtonResult {
  Eigen::VectorXd z;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

/// Gauss-Newton with step halving (up to 20 times) when a full step would
/// increase J. Stops once the accepted step is shorter than `tol` in the
/// Euclidean norm. `iterations` counts the steps that were longer than `tol`,
/// with a minimum of one, so an affine lift converges in a single iteration.
GaussNewtonResult gauss_newton(const ReducedObjective& objective, Eigen::VectorXd z0, double tol, int max_iters);

}  // namespace mbgp
