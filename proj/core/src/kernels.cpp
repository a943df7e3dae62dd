#include "mbgp/kernels.hpp"

#include <cmath>
#include <string>

#include "mbgp/errors.hpp"

namespace mbgp {

namespace {

// Derivative orders per axis for one additive term of an operator.
using Orders = std::array<std::uint8_t, kMaxDim>;

struct Terms {
  std::array<Orders, kMaxDim> orders{};
  int count = 0;
};

Terms expand(DiffOp op, int dim) {
  Terms t;
  switch (op.kind) {
    case DiffOp::Kind::identity:
      t.count = 1;
      break;
    case DiffOp::Kind::first_deriv:
      t.count = 1;
      t.orders[0][static_cast<std::size_t>(op.axis)] = 1;
      break;
    case DiffOp::Kind::second_deriv:
      t.count = 1;
      t.orders[0][static_cast<std::size_t>(op.axis)] = 2;
      break;
    case DiffOp::Kind::laplacian:
      t.count = dim;
      for (int a = 0; a < dim; ++a) t.orders[static_cast<std::size_t>(a)][static_cast<std::size_t>(a)] = 2;
      break;
  }
  return t;
}

void check_point(const KernelSpec& spec, const Point& p) {
  if (p.size() != spec.dimension()) {
    throw InvalidArgument("point has dimension " + std::to_string(p.size()) + ", kernel expects " +
                          std::to_string(spec.dimension()));
  }
}

double squared_exponent(const KernelSpec& spec, const Point& x, const Point& y) {
  double q = 0.0;
  for (int a = 0; a < spec.dimension(); ++a) {
    const double r = x[a] - y[a];
    q += spec.rate(a) * r * r;
  }
  return q;
}

// Strict weak order on (op, point) used to pick a canonical argument order.
bool precedes(DiffOp a, const Point& x, DiffOp b, const Point& y) {
  if (a != b) return a < b;
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] != y[i]) return x[i] < y[i];
  }
  return false;
}

// d^n/dr^n exp(-s r^2) = (-sqrt(s))^n H_n(sqrt(s) r) exp(-s r^2), H_n physicists' Hermite.
// Fills the polynomial factor for n = 0..4.
void hermite_factors(double sqrt_s, double r, std::array<double, 5>& out) {
  const double t = sqrt_s * r;
  const double t2 = t * t;
  const double h[5] = {1.0, 2.0 * t, 4.0 * t2 - 2.0, 8.0 * t2 * t - 12.0 * t, 16.0 * t2 * t2 - 48.0 * t2 + 12.0};
  double scale = 1.0;
  for (int n = 0; n < 5; ++n) {
    out[static_cast<std::size_t>(n)] = scale * h[n];
    scale *= -sqrt_s;
  }
}

double eval_canonical(const KernelSpec& spec, DiffOp opL, const Point& x, DiffOp opR, const Point& y) {
  const int dim = spec.dimension();
  const double e = std::exp(-squared_exponent(spec, x, y));
  if (opL.kind == DiffOp::Kind::identity && opR.kind == DiffOp::Kind::identity) return e;

  std::array<std::array<double, 5>, kMaxDim> poly{};
  for (int a = 0; a < dim; ++a) {
    hermite_factors(std::sqrt(spec.rate(a)), x[a] - y[a], poly[static_cast<std::size_t>(a)]);
  }
  const Terms left = expand(opL, dim);
  const Terms right = expand(opR, dim);
  double sum = 0.0;
  for (int i = 0; i < left.count; ++i) {
    for (int j = 0; j < right.count; ++j) {
      double prod = 1.0;
      for (int a = 0; a < dim; ++a) {
        const auto p = left.orders[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
        const auto q = right.orders[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
        // derivatives in y pick up (-1)^q since k depends on x - y
        const double f = poly[static_cast<std::size_t>(a)][static_cast<std::size_t>(p + q)];
        prod *= (q % 2 == 1) ? -f : f;
      }
      sum += prod;
    }
  }
  return e * sum;
}

}  // namespace

Point make_point(std::initializer_list<double> coords) {
  if (coords.size() == 0 || coords.size() > static_cast<std::size_t>(kMaxDim)) {
    throw InvalidArgument("point dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  }
  Point p(static_cast<Eigen::Index>(coords.size()));
  Eigen::Index i = 0;
  for (double c : coords) p[i++] = c;
  return p;
}

KernelSpec KernelSpec::isotropic(double sigma, int dimension) {
  if (!(sigma > 0.0)) throw InvalidArgument("isotropic lengthscale must be positive");
  if (dimension < 1 || dimension > kMaxDim) throw InvalidArgument("kernel dimension out of range");
  KernelSpec k;
  k.family_ = KernelFamily::gaussian_isotropic;
  k.dimension_ = dimension;
  k.lengthscales_ = {sigma};
  for (int a = 0; a < dimension; ++a) k.rates_[static_cast<std::size_t>(a)] = 1.0 / (2.0 * sigma * sigma);
  return k;
}

KernelSpec KernelSpec::anisotropic(std::span<const double> lengthscales) {
  const auto dim = static_cast<int>(lengthscales.size());
  if (dim < 1 || dim > kMaxDim) throw InvalidArgument("kernel dimension out of range");
  KernelSpec k;
  k.family_ = KernelFamily::gaussian_anisotropic;
  k.dimension_ = dim;
  k.lengthscales_.assign(lengthscales.begin(), lengthscales.end());
  for (int a = 0; a < dim; ++a) {
    const double s = lengthscales[static_cast<std::size_t>(a)];
    if (!(s > 0.0)) throw InvalidArgument("anisotropic lengthscales must be positive");
    k.rates_[static_cast<std::size_t>(a)] = 1.0 / (s * s);
  }
  return k;
}

KernelSpec KernelSpec::anisotropic(std::initializer_list<double> lengthscales) {
  return anisotropic(std::span<const double>(lengthscales.begin(), lengthscales.size()));
}

const char* to_string(DiffOp::Kind kind) {
  switch (kind) {
    case DiffOp::Kind::identity: return "identity";
    case DiffOp::Kind::first_deriv: return "first_deriv";
    case DiffOp::Kind::second_deriv: return "second_deriv";
    case DiffOp::Kind::laplacian: return "laplacian";
  }
  return "unknown";
}

void validate_op(const KernelSpec& spec, DiffOp op) {
  switch (op.kind) {
    case DiffOp::Kind::identity:
    case DiffOp::Kind::laplacian:
      return;
    case DiffOp::Kind::first_deriv:
    case DiffOp::Kind::second_deriv:
      if (op.axis < 0 || op.axis >= spec.dimension()) {
        throw InvalidArgument("operator axis " + std::to_string(op.axis) + " out of range for dimension " +
                              std::to_string(spec.dimension()));
      }
      return;
  }
  throw UnsupportedOperator("unsupported differential operator tag " +
                            std::to_string(static_cast<int>(op.kind)));
}

double eval_k(const KernelSpec& spec, const Point& x, const Point& y) {
  check_point(spec, x);
  check_point(spec, y);
  return std::exp(-squared_exponent(spec, x, y));
}

double eval_op_k(const KernelSpec& spec, DiffOp opL, const Point& x, DiffOp opR, const Point& y) {
  check_point(spec, x);
  check_point(spec, y);
  validate_op(spec, opL);
  validate_op(spec, opR);
  if (precedes(opR, y, opL, x)) return eval_canonical(spec, opR, y, opL, x);
  return eval_canonical(spec, opL, x, opR, y);
}

double diagonal_value(const KernelSpec& spec, DiffOp op) {
  const Point origin = Point::Zero(spec.dimension());
  return eval_op_k(spec, op, origin, op, origin);
}

Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const Functional> functionals) {
  if (functionals.empty()) throw InvalidArgument("gram requires a non-empty functional list");
  const auto n = static_cast<Eigen::Index>(functionals.size());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Functional& fj = functionals[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i <= j; ++i) {
      const Functional& fi = functionals[static_cast<std::size_t>(i)];
      const double v = eval_op_k(spec, fi.op, fi.point, fj.op, fj.point);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Eigen::MatrixXd cross_gram(const KernelSpec& spec, std::span<const Functional> rows,
                           std::span<const Functional> cols) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    const Functional& fj = cols[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const Functional& fi = rows[static_cast<std::size_t>(i)];
      g(i, j) = eval_op_k(spec, fi.op, fi.point, fj.op, fj.point);
    }
  }
  return g;
}

Eigen::VectorXd cross_row(const KernelSpec& spec, const Point& x, std::span<const Functional> functionals) {
  check_point(spec, x);
  Eigen::VectorXd row(static_cast<Eigen::Index>(functionals.size()));
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    const Functional& f = functionals[static_cast<std::size_t>(j)];
    row[j] = eval_op_k(spec, DiffOp::identity(), x, f.op, f.point);
  }
  return row;
}

}  // namespace mbgp
