#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "mbgp/errors.hpp"
#include "mbgp/kernels.hpp"
#include "oracles/oracles.hpp"

using namespace mbgp;

namespace {

std::vector<double> rates_of(const KernelSpec& k) {
  std::vector<double> r;
  for (int a = 0; a < k.dimension(); ++a) r.push_back(k.rate(a));
  return r;
}

std::vector<DiffOp> all_ops(int dim) {
  std::vector<DiffOp> ops{DiffOp::identity(), DiffOp::laplacian()};
  for (int a = 0; a < dim; ++a) {
    ops.push_back(DiffOp::first(a));
    ops.push_back(DiffOp::second(a));
  }
  return ops;
}

// Second point within a couple of lengthscales of the first so entries are not negligible.
Point nearby(const Point& x, const KernelSpec& k, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Point y = x;
  for (int a = 0; a < k.dimension(); ++a) y[a] += n(rng) / std::sqrt(2.0 * k.rate(a));
  return y;
}

}  // namespace

TEST(EvalK, IsotropicZeroDistanceIsOne) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  EXPECT_EQ(eval_k(k, make_point({0.3, 0.7}), make_point({0.3, 0.7})), 1.0);
}

TEST(EvalK, IsotropicOneLengthscaleApart) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  EXPECT_NEAR(eval_k(k, make_point({0.0, 0.0}), make_point({0.2, 0.0})), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(std::exp(-0.5), 0.606531, 1e-6);
}

TEST(EvalK, AnisotropicHasNoHalfFactor) {
  const auto k = KernelSpec::anisotropic({0.3, 0.05});
  EXPECT_NEAR(eval_k(k, make_point({0.0, 0.0}), make_point({0.3, 0.0})), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(std::exp(-1.0), 0.367879, 1e-6);
}

TEST(EvalK, DimensionMismatchThrows) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  EXPECT_THROW(eval_k(k, make_point({0.0, 0.0, 0.0}), make_point({0.0, 0.0, 0.0})), InvalidArgument);
  EXPECT_THROW(eval_k(k, make_point({0.0}), make_point({0.0, 0.0})), InvalidArgument);
}

TEST(KernelSpec, RejectsBadLengthscales) {
  EXPECT_THROW(KernelSpec::isotropic(0.0, 2), InvalidArgument);
  EXPECT_THROW(KernelSpec::isotropic(-1.0, 2), InvalidArgument);
  EXPECT_THROW(KernelSpec::isotropic(0.2, 0), InvalidArgument);
  EXPECT_THROW(KernelSpec::anisotropic({0.3, 0.0}), InvalidArgument);
}

TEST(EvalOpK, IdentityPairMatchesEvalK) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& k : {KernelSpec::isotropic(0.2, 2), KernelSpec::anisotropic({0.3, 0.05})}) {
    for (int t = 0; t < 100; ++t) {
      const Point x = make_point({u(rng), u(rng)});
      const Point y = make_point({u(rng), u(rng)});
      EXPECT_EQ(eval_op_k(k, DiffOp::identity(), x, DiffOp::identity(), y), eval_k(k, x, y));
    }
  }
}

TEST(EvalOpK, LaplacianPairAtCoincidentPoints) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  const Point x = make_point({0.4, 0.1});
  // Frozen from the quad-precision finite-difference oracle (step 1e-4), which gives 5000 to ~1e-9.
  const double fd = oracle::fd_operator_entry(rates_of(k), DiffOp::laplacian(), x, DiffOp::laplacian(), x);
  EXPECT_NEAR(fd, 5000.0, 1e-6);
  EXPECT_NEAR(eval_op_k(k, DiffOp::laplacian(), x, DiffOp::laplacian(), x), 5000.0, 1e-9);
  EXPECT_NEAR(diagonal_value(k, DiffOp::laplacian()), 5000.0, 1e-9);
}

TEST(EvalOpK, OddDerivativeVanishesAtZeroOffset) {
  const auto k = KernelSpec::isotropic(0.3, 2);
  const Point x = make_point({0.2, 0.9});
  EXPECT_EQ(eval_op_k(k, DiffOp::first(0), x, DiffOp::identity(), x), 0.0);
  EXPECT_EQ(eval_op_k(k, DiffOp::identity(), x, DiffOp::first(1), x), 0.0);
}

TEST(EvalOpK, AxisOutOfRangeThrows) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  const Point x = make_point({0.0, 0.0});
  EXPECT_THROW(eval_op_k(k, DiffOp::first(2), x, DiffOp::identity(), x), InvalidArgument);
  EXPECT_THROW(eval_op_k(k, DiffOp::identity(), x, DiffOp::second(-1), x), InvalidArgument);
}

TEST(EvalOpK, UnknownOperatorTagThrows) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  DiffOp bad;
  bad.kind = static_cast<DiffOp::Kind>(17);
  EXPECT_THROW(validate_op(k, bad), UnsupportedOperator);
}

// Property: closed form against nested central differences, both families, every operator pair.
TEST(EvalOpK, MatchesNestedFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& k : {KernelSpec::isotropic(0.2, 2), KernelSpec::anisotropic({0.3, 0.05})}) {
    const auto ops = all_ops(2);
    std::uniform_int_distribution<std::size_t> pick(0, ops.size() - 1);
    for (int t = 0; t < 200; ++t) {
      const DiffOp a = ops[pick(rng)], b = ops[pick(rng)];
      const Point x = make_point({u(rng), u(rng)});
      const Point y = nearby(x, k, rng);
      const double exact = eval_op_k(k, a, x, b, y);
      const double fd = oracle::fd_operator_entry(rates_of(k), a, x, b, y);
      const double err = std::abs(exact - fd);
      EXPECT_TRUE(err <= 1e-5 * std::abs(fd) || err <= 1e-8)
          << to_string(a.kind) << a.axis << "/" << to_string(b.kind) << b.axis << " exact " << exact << " fd " << fd;
    }
  }
}

TEST(EvalOpK, SymmetricBitForBit) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& k : {KernelSpec::isotropic(0.2, 2), KernelSpec::anisotropic({0.3, 0.05})}) {
    const auto ops = all_ops(2);
    for (int t = 0; t < 50; ++t) {
      const Point x = make_point({u(rng), u(rng)});
      const Point y = make_point({u(rng), u(rng)});
      for (const DiffOp a : ops) {
        for (const DiffOp b : ops) EXPECT_EQ(eval_op_k(k, a, x, b, y), eval_op_k(k, b, y, a, x));
      }
    }
  }
}

TEST(DiagonalValue, MatchesCoincidentEntry) {
  for (const auto& k : {KernelSpec::isotropic(0.2, 2), KernelSpec::anisotropic({0.3, 0.05})}) {
    const Point x = make_point({0.31, 0.77});
    for (const DiffOp op : all_ops(2)) {
      EXPECT_NEAR(diagonal_value(k, op), eval_op_k(k, op, x, op, x), 1e-12 * diagonal_value(k, op));
    }
  }
}

TEST(Gram, SingleIdentity) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  const std::vector<Functional> f{{make_point({0.5, 0.5}), DiffOp::identity()}};
  const Eigen::MatrixXd g = gram(k, f);
  ASSERT_EQ(g.rows(), 1);
  EXPECT_EQ(g(0, 0), 1.0);
}

TEST(Gram, TwoIdentitiesOneLengthscaleApart) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  const std::vector<Functional> f{{make_point({0.0, 0.0}), DiffOp::identity()},
                                  {make_point({0.2, 0.0}), DiffOp::identity()}};
  const Eigen::MatrixXd g = gram(k, f);
  EXPECT_EQ(g(0, 0), 1.0);
  EXPECT_EQ(g(1, 1), 1.0);
  EXPECT_NEAR(g(0, 1), std::exp(-0.5), 1e-15);
  EXPECT_EQ(g(0, 1), g(1, 0));
}

TEST(Gram, EmptyListThrows) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  EXPECT_THROW(gram(k, std::vector<Functional>{}), InvalidArgument);
}

// Property: exact symmetry and positive semidefiniteness with a 1e-10 ridge.
TEST(Gram, SymmetricAndFactorizable) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 200);
  for (const auto& k : {KernelSpec::isotropic(0.2, 2), KernelSpec::anisotropic({0.3, 0.05})}) {
    const auto ops = all_ops(2);
    std::uniform_int_distribution<std::size_t> pick(0, ops.size() - 1);
    for (int t = 0; t < 8; ++t) {
      std::vector<Functional> f;
      const int n = size(rng);
      for (int i = 0; i < n; ++i) f.push_back({make_point({u(rng), u(rng)}), ops[pick(rng)]});
      const Eigen::MatrixXd g = gram(k, f);
      EXPECT_TRUE(g == g.transpose());
      // Scale-free ridge: normalize by the diagonal so 1e-10 is relative.
      const Eigen::VectorXd d = g.diagonal().cwiseSqrt().cwiseInverse();
      const Eigen::MatrixXd s = d.asDiagonal() * g * d.asDiagonal();
      Eigen::LLT<Eigen::MatrixXd> llt(s + 1e-10 * Eigen::MatrixXd::Identity(n, n));
      EXPECT_EQ(llt.info(), Eigen::Success) << "n = " << n;
    }
  }
}

TEST(CrossRow, CoincidentIdentity) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  const Point x = make_point({0.5, 0.5});
  const std::vector<Functional> f{{x, DiffOp::identity()}};
  const Eigen::VectorXd r = cross_row(k, x, f);
  ASSERT_EQ(r.size(), 1);
  EXPECT_EQ(r[0], 1.0);
}

TEST(CrossRow, OneLengthscaleAway) {
  const auto k = KernelSpec::isotropic(0.2, 2);
  const std::vector<Functional> f{{make_point({0.2, 0.0}), DiffOp::identity()}};
  EXPECT_NEAR(cross_row(k, make_point({0.0, 0.0}), f)[0], std::exp(-0.5), 1e-15);
}

TEST(CrossRow, MatchesEntrywise) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto k = KernelSpec::anisotropic({0.3, 0.05});
  const auto ops = all_ops(2);
  std::vector<Functional> f;
  for (int i = 0; i < 30; ++i) f.push_back({make_point({u(rng), u(rng)}), ops[static_cast<std::size_t>(i) % ops.size()]});
  const Point x = make_point({u(rng), u(rng)});
  const Eigen::VectorXd r = cross_row(k, x, f);
  for (std::size_t j = 0; j < f.size(); ++j) {
    EXPECT_EQ(r[static_cast<Eigen::Index>(j)], eval_op_k(k, DiffOp::identity(), x, f[j].op, f[j].point));
  }
  const std::vector<Functional> rows{{x, DiffOp::identity()}};
  const Eigen::MatrixXd c = cross_gram(k, rows, f);
  EXPECT_TRUE(c.row(0).transpose() == r);
}
