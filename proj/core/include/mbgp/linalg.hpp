#pragma once

#include <Eigen/Core>

namespace mbgp {

/// Lower Cholesky factor L of an SPD matrix A = L L^T. The factorization runs
/// in place on the matrix handed to factorize_spd, so large systems need no
/// second dense copy.
class Cholesky {
 public:
  Cholesky() = default;

  Eigen::Index rows() const { return l_.rows(); }
  auto matrixL() const { return l_.triangularView<Eigen::Lower>(); }

  template <typename Rhs>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<Rhs>& b) const {
    Eigen::MatrixXd x = b;
    matrixL().solveInPlace(x);
    l_.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
  }

 private:
  friend Cholesky factorize_spd(Eigen::MatrixXd a, double eta);
  Eigen::MatrixXd l_;
};

/// Throws NumericalConditioning (tagged with `eta`) when a pivot is
/// non-positive or non-finite. Only the lower triangle of `a` is read.
Cholesky factorize_spd(Eigen::MatrixXd a, double eta);

/// x^T A^{-1} x using a cached factor of A.
double inverse_quadratic_form(const Cholesky& factor, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mbgp
