#include "mbgp/linalg.hpp"

#include <Eigen/Cholesky>
#include <sstream>

#include "mbgp/errors.hpp"

namespace mbgp {

Cholesky factorize_spd(Eigen::MatrixXd a, double eta) {
  bool ok = a.rows() == a.cols() && a.rows() > 0;
  if (ok) {
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(a);
    ok = llt.info() == Eigen::Success;
  }
  if (ok) {
    const auto d = a.diagonal();
    ok = d.allFinite() && (d.array() > 0.0).all();
  }
  if (!ok) {
    std::ostringstream msg;
    msg << "Cholesky factorization of a " << a.rows() << "x" << a.cols() << " system failed with nugget eta = "
        << eta;
    throw NumericalConditioning(msg.str(), eta);
  }
  Cholesky c;
  c.l_ = std::move(a);
  return c;
}

double inverse_quadratic_form(const Cholesky& factor, const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd half = x;
  factor.matrixL().solveInPlace(half);
  return half.squaredNorm();
}

}  // namespace mbgp
