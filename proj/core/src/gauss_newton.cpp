#include "mbgp/gauss_newton.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "mbgp/errors.hpp"

namespace mbgp {

namespace {

constexpr int kMaxHalvings = 20;

bool acceptable(double trial, double current) {
  return trial <= current + 1e-12 * std::max(1.0, std::abs(current));
}

}  // namespace

Eigen::VectorXd ReducedObjective::project(Eigen::VectorXd r) const {
  if (clamp) r = r.cwiseMax(-*clamp).cwiseMin(*clamp);
  return r;
}

ReducedObjective::Parts ReducedObjective::evaluate(const Eigen::VectorXd& r) const {
  Parts parts;
  Eigen::VectorXd w;
  lift(r, w, nullptr);
  parts.quadratic = 0.5 * quad_weight * inverse_quadratic_form(*factor, w);
  if (misfit && misfit_weight != 0.0) {
    Eigen::VectorXd e;
    misfit(w, e, nullptr);
    parts.misfit = 0.5 * misfit_weight * e.squaredNorm();
  }
  if (prox_weight != 0.0) parts.prox = 0.5 * prox_weight * (r - center).squaredNorm();
  return parts;
}

GaussNewtonResult gauss_newton(const ReducedObjective& objective, Eigen::VectorXd z0, double tol, int max_iters) {
  if (objective.factor == nullptr || !objective.lift) throw InvalidArgument("gauss_newton: incomplete objective");
  if (!(tol > 0.0) || max_iters < 1) throw InvalidArgument("gauss_newton: need tol > 0 and max_iters >= 1");

  GaussNewtonResult res;
  res.z = objective.project(std::move(z0));
  const Eigen::Index n = res.z.size();
  double current = objective.evaluate(res.z).total();
  if (n == 0) {
    res.iterations = 1;
    res.converged = true;
    res.objective = current;
    return res;
  }

  const auto& L = objective.factor->matrixL();
  const bool has_misfit = objective.misfit && objective.misfit_weight != 0.0;
  int long_steps = 0;
  Eigen::VectorXd w;
  Eigen::MatrixXd W;
  for (int it = 1; it <= max_iters; ++it) {
    objective.lift(res.z, w, &W);
    const Eigen::MatrixXd B = L.solve(W);
    const Eigen::VectorXd b = L.solve(w);

    Eigen::MatrixXd H = objective.quad_weight * (B.transpose() * B);
    Eigen::VectorXd g = objective.quad_weight * (B.transpose() * b);
    if (has_misfit) {
      Eigen::VectorXd e;
      Eigen::MatrixXd E;
      objective.misfit(w, e, &E);
      const Eigen::MatrixXd EW = E * W;
      H.noalias() += objective.misfit_weight * (EW.transpose() * EW);
      g.noalias() += objective.misfit_weight * (EW.transpose() * e);
    }
    if (objective.prox_weight != 0.0) {
      H.diagonal().array() += objective.prox_weight;
      g += objective.prox_weight * (res.z - objective.center);
    }

    Eigen::LLT<Eigen::MatrixXd> normal(H);
    Eigen::VectorXd delta;
    if (normal.info() == Eigen::Success) {
      delta = normal.solve(-g);
    } else {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw NumericalConditioning("Gauss-Newton normal equations are singular", 0.0);
      }
      delta = ldlt.solve(-g);
    }
    if (!delta.allFinite()) throw NumericalConditioning("Gauss-Newton step is not finite", 0.0);

    double scale = 1.0;
    Eigen::VectorXd trial = objective.project(res.z + delta);
    double trial_value = objective.evaluate(trial).total();
    for (int h = 0; h < kMaxHalvings && !acceptable(trial_value, current); ++h) {
      scale *= 0.5;
      trial = objective.project(res.z + scale * delta);
      trial_value = objective.evaluate(trial).total();
    }
    if (!acceptable(trial_value, current)) {
      // No descent along the Gauss-Newton direction at working precision.
      res.iterations = std::max(1, long_steps);
      res.converged = delta.norm() < tol;
      res.objective = current;
      return res;
    }
    const double moved = (trial - res.z).norm();
    res.z = std::move(trial);
    current = trial_value;
    if (moved < tol) {
      res.iterations = std::max(1, long_steps);
      res.converged = true;
      res.objective = current;
      return res;
    }
    ++long_steps;
  }
  res.iterations = max_iters;
  res.converged = false;
  res.objective = current;
  return res;
}

}  // namespace mbgp
