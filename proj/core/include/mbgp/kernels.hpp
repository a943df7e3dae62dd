#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mbgp {

inline constexpr int kMaxDim = 3;

/// Coordinates of a point. Fixed capacity, so no heap allocation.
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

Point make_point(std::initializer_list<double> coords);

enum class KernelFamily : std::uint8_t { gaussian_isotropic, gaussian_anisotropic };

/// Gaussian kernel k(x, y) = exp(-sum_a rate_a (x_a - y_a)^2).
///
/// The two families use different exponent conventions:
///   isotropic   rate_a = 1 / (2 sigma^2)
///   anisotropic rate_a = 1 / sigma_a^2   (no factor 1/2)
class KernelSpec {
 public:
  static KernelSpec isotropic(double sigma, int dimension);
  static KernelSpec anisotropic(std::span<const double> lengthscales);
  static KernelSpec anisotropic(std::initializer_list<double> lengthscales);

  KernelFamily family() const { return family_; }
  int dimension() const { return dimension_; }
  const std::vector<double>& lengthscales() const { return lengthscales_; }
  double rate(int axis) const { return rates_[static_cast<std::size_t>(axis)]; }

 private:
  KernelSpec() = default;
  KernelFamily family_ = KernelFamily::gaussian_isotropic;
  int dimension_ = 0;
  std::vector<double> lengthscales_;
  std::array<double, kMaxDim> rates_{};
};

struct DiffOp {
  enum class Kind : std::uint8_t { identity, first_deriv, second_deriv, laplacian };

  Kind kind = Kind::identity;
  int axis = 0;  // ignored for identity and laplacian

  static constexpr DiffOp identity() { return {Kind::identity, 0}; }
  static constexpr DiffOp first(int axis) { return {Kind::first_deriv, axis}; }
  static constexpr DiffOp second(int axis) { return {Kind::second_deriv, axis}; }
  static constexpr DiffOp laplacian() { return {Kind::laplacian, 0}; }

  friend constexpr auto operator<=>(const DiffOp&, const DiffOp&) = default;
};

const char* to_string(DiffOp::Kind kind);

/// delta_x composed with a differential operator.
struct Functional {
  Point point;
  DiffOp op;
};

double eval_k(const KernelSpec& spec, const Point& x, const Point& y);

/// (L_x (x) R_y) k(x, y) in closed form. Symmetric bit-for-bit under
/// exchanging (opL, x) with (opR, y).
double eval_op_k(const KernelSpec& spec, DiffOp opL, const Point& x, DiffOp opR, const Point& y);

/// Value of eval_op_k(op, x, op, x); independent of x for these stationary kernels.
double diagonal_value(const KernelSpec& spec, DiffOp op);

void validate_op(const KernelSpec& spec, DiffOp op);

Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const Functional> functionals);

/// Rectangular block with entries eval_op_k(rows[i].op, rows[i].point, cols[j].op, cols[j].point).
Eigen::MatrixXd cross_gram(const KernelSpec& spec, std::span<const Functional> rows,
                           std::span<const Functional> cols);

Eigen::VectorXd cross_row(const KernelSpec& spec, const Point& x, std::span<const Functional> functionals);

}  // namespace mbgp
