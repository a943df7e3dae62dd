#include "mbgp/reference.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "mbgp/errors.hpp"

namespace mbgp {

using std::numbers::pi;

double elliptic_true(const Point& x) {
  return std::sin(pi * x[0]) * std::sin(pi * x[1]) + 4.0 * std::sin(4.0 * pi * x[0]) * std::sin(4.0 * pi * x[1]);
}

double elliptic_laplacian(const Point& x) {
  return -2.0 * pi * pi * std::sin(pi * x[0]) * std::sin(pi * x[1]) -
         128.0 * pi * pi * std::sin(4.0 * pi * x[0]) * std::sin(4.0 * pi * x[1]);
}

double elliptic_forcing(const Point& x) {
  const double u = elliptic_true(x);
  return -elliptic_laplacian(x) + u * u * u;
}

double linear_target(const Point& x) {
  return std::sin(pi * x[0]) * std::cos(pi * x[1]) + 0.5 * x[0];
}

const GaussHermiteRule& gauss_hermite(int n) {
  if (n < 1) throw InvalidArgument("Gauss-Hermite rule needs at least one node");
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mu);
  if (auto it = cache.find(n); it != cache.end()) return it->second;

  // Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix of the
  // Hermite recurrence; off-diagonal entries sqrt(k/2).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(0.5 * k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const double mu0 = std::sqrt(pi);
  for (int i = 0; i < n; ++i) {
    const double v = es.eigenvectors()(0, i);
    rule.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
    rule.weights[static_cast<std::size_t>(i)] = mu0 * v * v;
  }
  // Enforce exact symmetry of the rule so odd integrands cancel.
  for (int i = 0; i < n / 2; ++i) {
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    const double node = 0.5 * (rule.nodes[hi] - rule.nodes[lo]);
    const double weight = 0.5 * (rule.weights[hi] + rule.weights[lo]);
    rule.nodes[lo] = -node;
    rule.nodes[hi] = node;
    rule.weights[lo] = rule.weights[hi] = weight;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return cache.emplace(n, std::move(rule)).first->second;
}

double burgers_true(double t, double x, double nu, int quad_nodes) {
  if (t < 0.0) throw InvalidArgument("burgers_true requires t >= 0");
  if (!(nu > 0.0)) throw InvalidArgument("burgers_true requires nu > 0");
  if (t == 0.0) return -std::sin(pi * x);

  // eta = sqrt(4 nu t) s turns exp(-eta^2 / (4 nu t)) into the Hermite weight;
  // the Jacobian cancels in the ratio.
  const GaussHermiteRule& rule = gauss_hermite(quad_nodes);
  const double scale = std::sqrt(4.0 * nu * t);
  const double c = 1.0 / (2.0 * pi * nu);
  // Factor exp(-c cos) by its maximum exp(c) to keep the sums in range.
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double shifted = pi * (x - scale * rule.nodes[j]);
    const double g = rule.weights[j] * std::exp(-c * (std::cos(shifted) + 1.0));
    num += std::sin(shifted) * g;
    den += g;
  }
  return -num / den;
}

EvalGrid::EvalGrid(const Point& lower, const Point& upper, std::vector<int> resolution)
    : resolution_(std::move(resolution)) {
  const auto dim = static_cast<std::size_t>(lower.size());
  if (upper.size() != lower.size() || resolution_.size() != dim) {
    throw InvalidArgument("grid bounds and resolution must share a dimension");
  }
  std::size_t total = 1;
  for (int r : resolution_) {
    if (r < 2) throw InvalidArgument("grid resolution must be at least 2 per axis");
    total *= static_cast<std::size_t>(r);
  }
  points_.reserve(total);
  std::vector<int> idx(dim, 0);
  for (std::size_t n = 0; n < total; ++n) {
    Point p(static_cast<Eigen::Index>(dim));
    for (std::size_t a = 0; a < dim; ++a) {
      const auto ai = static_cast<Eigen::Index>(a);
      const double frac = static_cast<double>(idx[a]) / static_cast<double>(resolution_[a] - 1);
      p[ai] = (idx[a] == resolution_[a] - 1) ? upper[ai] : lower[ai] + frac * (upper[ai] - lower[ai]);
    }
    points_.push_back(p);
    for (std::size_t a = dim; a-- > 0;) {
      if (++idx[a] < resolution_[a]) break;
      idx[a] = 0;
    }
  }
}

EvalGrid::EvalGrid(const Point& lower, const Point& upper, int resolution_per_axis)
    : EvalGrid(lower, upper, std::vector<int>(static_cast<std::size_t>(lower.size()), resolution_per_axis)) {}

ErrorReport error_report(const Eigen::Ref<const Eigen::VectorXd>& u_numeric,
                         const Eigen::Ref<const Eigen::VectorXd>& u_true) {
  if (u_numeric.size() != u_true.size()) {
    throw InvalidArgument("error_report: grid sizes differ (" + std::to_string(u_numeric.size()) + " vs " +
                          std::to_string(u_true.size()) + ")");
  }
  ErrorReport r;
  r.pointwise = (u_numeric - u_true).cwiseAbs();
  r.linf = r.pointwise.size() > 0 ? r.pointwise.maxCoeff() : 0.0;
  const double ref = u_true.norm();
  const double diff = (u_numeric - u_true).norm();
  r.relative_l2 = ref > 0.0 ? diff / ref : diff;
  return r;
}

}  // namespace mbgp
