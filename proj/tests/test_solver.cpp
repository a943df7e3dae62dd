#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "mbgp/diagnostics.hpp"
#include "mbgp/errors.hpp"
#include "mbgp/gauss_newton.hpp"
#include "mbgp/linalg.hpp"
#include "mbgp/solver.hpp"
#include "oracles/oracles.hpp"
#include "oracles/toys.hpp"

using namespace mbgp;

namespace {

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

SolverConfig tight(SolveMode mode, double eta) {
  SolverConfig c;
  c.mode = mode;
  c.eta = eta;
  c.gn_tol = 1e-12;
  c.gn_max_iters = 200;
  return c;
}

// Elliptic state with interior u drawn at random and eliminated entries derived.
LatentState perturbed_state(const Discretization& d, const SolverConfig& c, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  LatentState s = initial_state(d, c);
  for (std::size_t i = 0; i < d.num_points(); ++i) {
    const int w = reduced_width(d.problem, d.colloc, i);
    if (w == 0 || c.mode == SolveMode::penalty) {
      if (c.mode == SolveMode::penalty) {
        for (int m = 0; m < d.layout[i].width; ++m) s.z[static_cast<Eigen::Index>(d.layout[i].offset) + m] += scale * g(rng);
      }
      continue;
    }
    Eigen::VectorXd r(w);
    for (int m = 0; m < w; ++m) r[m] = scale * g(rng);
    const EliminatedBlock b = eliminate(d.problem, d.colloc, i, r);
    s.z.segment(static_cast<Eigen::Index>(d.layout[i].offset), b.full.size()) = b.full;
  }
  return s;
}

}  // namespace

TEST(SolverConfig, ValidationNamesTheField) {
  SolverConfig c;
  c.eta = 0.0;
  try {
    c.validate(10);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("eta"), std::string::npos);
  }
  c = SolverConfig{};
  c.iterations = 0;
  EXPECT_THROW(c.validate(10), InvalidArgument);
  c = SolverConfig{};
  c.batch_size = 11;
  EXPECT_THROW(c.validate(10), InvalidArgument);
  c = SolverConfig{};
  EXPECT_NO_THROW(c.validate(12));
}

TEST(Cholesky, FailureCarriesEta) {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2, 1;
  try {
    (void)factorize_spd(a, 0.5);
    FAIL();
  } catch (const NumericalConditioning& e) {
    EXPECT_EQ(e.eta(), 0.5);
  }
}

TEST(AssembleBatch, SingleIdentityFunctional) {
  const auto p = ProblemSpec::linear();
  const Discretization d(p, make_collocation(p, {make_point({0.5, 0.5})}, {}), KernelSpec::isotropic(0.2, 2));
  SolverConfig c;
  c.mode = SolveMode::penalty;
  c.eta = 1e-13;
  const BatchSystem s = assemble_batch(d, std::vector<std::size_t>{0}, c, true);
  EXPECT_EQ(s.matrix()(0, 0), 1.0 + 1e-13);
}

TEST(AssembleBatch, NuggetIsTheOnlyDifferenceFromGram) {
  const Discretization d = oracle::elliptic_toy(40, 30, 3);
  SolverConfig c;
  c.eta = 1e-6;
  const std::vector<std::size_t> pts{1, 5, 7, 31, 35};
  const BatchSystem s = assemble_batch(d, pts, c, true);
  const Eigen::MatrixXd g = gram(d.kernel, s.functionals);
  const Eigen::MatrixXd diff = s.matrix() - g;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    for (Eigen::Index j = 0; j < diff.cols(); ++j) {
      if (i != j) EXPECT_EQ(diff(i, j), 0.0);
    }
    EXPECT_NEAR(diff(i, i), 1e-6 * diagonal_value(d.kernel, s.functionals[static_cast<std::size_t>(i)].op), 1e-12);
  }
  EXPECT_TRUE(s.matrix().isApprox(oracle::batch_matrix(d, pts, 1e-6), 1e-14));
}

TEST(AssembleBatch, WithoutSubstitutionUsesScaledIdentity) {
  const Discretization d = oracle::linear_toy(20, 1);
  SolverConfig c;
  c.mode = SolveMode::penalty;
  c.nugget_substitution = false;
  c.lambda_reg = 0.5;
  c.beta = 2.0;
  const std::vector<std::size_t> pts{0, 1, 2, 3};
  const BatchSystem s = assemble_batch(d, pts, c, true);
  const Eigen::MatrixXd expected = gram(d.kernel, s.functionals) + (0.5 * 4 / 2.0) * Eigen::MatrixXd::Identity(4, 4);
  EXPECT_TRUE(s.matrix().isApprox(expected, 1e-15));
}

TEST(AssembleBatch, TwelvePointEllipticSize) {
  const Discretization d = oracle::elliptic_toy(1200, 900, 0);
  SolverConfig c;
  const SpatialIndex idx = make_index(d, c);
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Batch b = sample_batch(idx, rng, 12);
    const BatchSystem s = assemble_with_retry(d, b.indices, c);
    EXPECT_GE(s.size(), 12u);
    EXPECT_LE(s.size(), 24u);
  }
}

TEST(AssembleBatch, DuplicatePointThrows) {
  const Discretization d = oracle::elliptic_toy(10, 6, 0);
  EXPECT_THROW(assemble_batch(d, std::vector<std::size_t>{1, 1}, SolverConfig{}), InvalidArgument);
}

TEST(ProximalStep, ScalarQuadratic) {
  const auto p = ProblemSpec::linear();
  CollocationSet col = make_collocation(p, {make_point({0.5, 0.5})}, {});
  col.y[0] = 1.0;
  const Discretization d(p, col, KernelSpec::isotropic(0.2, 2));
  SolverConfig c;
  c.mode = SolveMode::penalty;
  c.eta = 0.0;
  c.lambda_reg = 1.0;
  c.gn_tol = 1e-12;
  const BatchSystem s = assemble_batch(d, std::vector<std::size_t>{0}, c);
  LatentState st{Eigen::VectorXd::Zero(1), 1};
  const StepReport r = proximal_step(d, st, s, c, 0.0);
  EXPECT_NEAR(r.state.z[0], 0.5, 1e-12);
  EXPECT_NEAR(r.objective.total(), 0.25, 1e-12);
}

TEST(ProximalStep, HugeWeightKeepsState) {
  const Discretization d = oracle::elliptic_toy(30, 20, 4);
  SolverConfig c = tight(SolveMode::elimination, 1e-8);
  const LatentState st = perturbed_state(d, c, 1, 0.3);
  const std::vector<std::size_t> pts{0, 3, 8, 21, 25};
  const BatchSystem s = assemble_batch(d, pts, c);
  const StepReport r = proximal_step(d, st, s, c, 1e12);
  EXPECT_LE((r.state.z - st.z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ProximalStep, EllipticThreePointMatchesBruteForce) {
  const Discretization d = oracle::elliptic_toy(3, 2, 6);
  SolverConfig c = tight(SolveMode::elimination, 1e-6);
  const LatentState st = perturbed_state(d, c, 2, 0.5);
  const std::vector<std::size_t> pts = iota(3);
  const StepReport r = proximal_step(d, st, assemble_batch(d, pts, c), c, 1.0);
  const Eigen::VectorXd expected = oracle::prox_elimination(d, pts, st.z, 1e-6, 1.0);
  EXPECT_LE((r.state.z - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ProximalStep, PenaltyModeMatchesBruteForce) {
  const Discretization d = oracle::elliptic_toy(8, 5, 8);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  c.lambda_reg = 0.7;
  const LatentState st = perturbed_state(d, c, 3, 0.2);
  const std::vector<std::size_t> pts{0, 2, 4, 5, 7};
  const StepReport r = proximal_step(d, st, assemble_batch(d, pts, c), c, 1.0);
  const Eigen::VectorXd expected = oracle::prox_penalty(d, pts, st.z, 1e-6, 0.7, 1.0);
  EXPECT_LE((r.state.z - expected).cwiseAbs().maxCoeff(), 1e-6);
}

// Property: entries outside the batch are copied bit for bit; the batch objective does not increase.
TEST(ProximalStep, PartitionAndDescent) {
  const Discretization d = oracle::elliptic_toy(200, 150, 11);
  for (SolveMode mode : {SolveMode::elimination, SolveMode::penalty}) {
    SolverConfig c;
    c.mode = mode;
    c.eta = 1e-10;
    LatentState st = perturbed_state(d, c, 4, 0.3);
    const SpatialIndex idx = make_index(d, c);
    Rng rng(9);
    for (int t = 0; t < 30; ++t) {
      const Batch b = sample_batch(idx, rng, 12);
      const BatchSystem s = assemble_with_retry(d, b.indices, c);
      const StepReport r = proximal_step(d, st, s, c);
      std::vector<bool> in(d.layout.total, false);
      for (std::size_t j : s.latent) in[j] = true;
      for (std::size_t j = 0; j < d.layout.total; ++j) {
        if (!in[j]) ASSERT_EQ(r.state.z[static_cast<Eigen::Index>(j)], st.z[static_cast<Eigen::Index>(j)]);
      }
      EXPECT_LE(r.objective.total(), r.start.total() + 1e-10 * std::max(1.0, std::abs(r.start.total())));
      st = r.state;
    }
  }
}

TEST(GaussNewton, AffineLiftConvergesInOneIteration) {
  Eigen::MatrixXd a(3, 3);
  a << 2, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
  const Cholesky f = factorize_spd(a, 0.0);
  Eigen::MatrixXd b(3, 2);
  b << 1, 0, 0.5, 1, -1, 2;
  const Eigen::Vector3d shift(0.1, -0.2, 0.3);
  ReducedObjective obj;
  obj.lift = [&](const Eigen::VectorXd& r, Eigen::VectorXd& w, Eigen::MatrixXd* jac) {
    w = b * r + shift;
    if (jac) *jac = b;
  };
  obj.factor = &f;
  obj.prox_weight = 0.5;
  obj.center = Eigen::Vector2d(1.0, -1.0);
  const GaussNewtonResult r = gauss_newton(obj, Eigen::Vector2d::Zero(), 1e-10, 10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
  const Eigen::MatrixXd ai = a.inverse();
  const Eigen::Vector2d expected = (b.transpose() * ai * b + 0.5 * Eigen::Matrix2d::Identity())
                                       .lu()
                                       .solve(0.5 * obj.center - b.transpose() * ai * shift);
  EXPECT_LE((r.z - expected).norm(), 1e-12);
}

TEST(GaussNewton, OptimalStartReturnsAfterOneIteration) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(1, 1);
  const Cholesky f = factorize_spd(a, 0.0);
  ReducedObjective obj;
  obj.lift = [](const Eigen::VectorXd& r, Eigen::VectorXd& w, Eigen::MatrixXd* jac) {
    w = r;
    if (jac) *jac = Eigen::MatrixXd::Identity(1, 1);
  };
  obj.factor = &f;
  obj.prox_weight = 1.0;
  obj.center = Eigen::VectorXd::Zero(1);
  const GaussNewtonResult r = gauss_newton(obj, Eigen::VectorXd::Zero(1), 1e-8, 5);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.z[0], 0.0);
}

TEST(GaussNewton, SinglePointEllipticMatchesBisection) {
  const auto p = ProblemSpec::elliptic();
  const Point x = make_point({0.3, 0.4});
  const Discretization d(p, make_collocation(p, {x}, {}), KernelSpec::isotropic(0.2, 2));
  SolverConfig c = tight(SolveMode::elimination, 1e-2);
  const BatchSystem s = assemble_batch(d, std::vector<std::size_t>{0}, c);
  const LatentState st = initial_state(d, c);
  const double gamma = 2.0, u_bar = st.z[0];
  const StepReport r = proximal_step(d, st, s, c, gamma);

  const Eigen::Matrix2d a_inv = oracle::batch_matrix(d, {0}, 1e-2).inverse();
  const double f = d.colloc.y[0];
  auto stationarity = [&](double u) {
    const Eigen::Vector2d w(u, u * u * u - f);
    const Eigen::Vector2d j(1.0, 3.0 * u * u);
    return j.dot(a_inv * w) + gamma * (u - u_bar);
  };
  const double root = oracle::bisect(stationarity, 0.0, 20.0);
  EXPECT_NEAR(r.state.z[0], root, 1e-8);
  EXPECT_NEAR(r.state.z[1], root * root * root - f, 1e-7);
}

TEST(FullLoss, ZeroStatePenalty) {
  const Discretization d = oracle::elliptic_toy(10, 7, 2);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  const BatchSystem full = assemble_batch(d, iota(10), c);
  const LatentState z{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.layout.total)), 1};
  const LossParts l = full_loss(d, full, z, c);
  EXPECT_EQ(l.quadratic, 0.0);
  EXPECT_NEAR(l.misfit, d.colloc.y.squaredNorm() / 20.0, 1e-12 * d.colloc.y.squaredNorm());
}

TEST(FullLoss, EliminationHasNoMisfit) {
  const Discretization d = oracle::elliptic_toy(10, 7, 2);
  SolverConfig c = tight(SolveMode::elimination, 1e-6);
  const BatchSystem full = assemble_batch(d, iota(10), c);
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_EQ(full_loss(d, full, perturbed_state(d, c, s, 1.0), c).misfit, 0.0);
}

TEST(FullLoss, ScalarCase) {
  const auto p = ProblemSpec::linear();
  CollocationSet col = make_collocation(p, {make_point({0.5, 0.5})}, {});
  col.y[0] = 2.0;
  const Discretization d(p, col, KernelSpec::isotropic(0.2, 2));
  SolverConfig c;
  c.mode = SolveMode::penalty;
  c.eta = 0.0;
  const BatchSystem full = assemble_batch(d, std::vector<std::size_t>{0}, c);
  const LossParts l = full_loss(d, full, LatentState{Eigen::VectorXd::Constant(1, 2.0), 1}, c);
  EXPECT_EQ(l.total(), 2.0);
}

TEST(Run, SingleFullBatchIterationIsOneProximalSolve) {
  const Discretization d = oracle::elliptic_toy(8, 5, 1);
  SolverConfig c = tight(SolveMode::elimination, 1e-8);
  c.iterations = 1;
  c.batch_size = 8;
  const BatchSystem full = assemble_batch(d, iota(8), c);
  const RunHistory h = run(d, c, &full);
  ASSERT_EQ(h.records.size(), 1u);
  const StepReport r = proximal_step(d, initial_state(d, c), full, c);
  EXPECT_LE((h.final_state.z - r.state.z).cwiseAbs().maxCoeff(), 1e-12);
  c.iterations = 0;
  EXPECT_THROW(run(d, c, &full), InvalidArgument);
}

TEST(Run, DeterministicHistories) {
  const Discretization d = oracle::elliptic_toy(150, 110, 3);
  SolverConfig c;
  c.iterations = 40;
  c.record_every = 5;
  c.seed = 77;
  const BatchSystem full = assemble_with_retry(d, iota(150), c);
  const RunHistory a = run(d, c, &full), b = run(d, c, &full);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const auto &x = a.records[k], &y = b.records[k];
    EXPECT_EQ(x.seed_index, y.seed_index);
    EXPECT_EQ(x.gn_iters, y.gn_iters);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(x.batch_objective), std::bit_cast<std::uint64_t>(y.batch_objective));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(x.psi_quadratic), std::bit_cast<std::uint64_t>(y.psi_quadratic));
  }
  EXPECT_TRUE(a.final_state.z == b.final_state.z);
}

TEST(Run, RecordScheduleAndLossFallback) {
  const Discretization d = oracle::elliptic_toy(60, 45, 3);
  SolverConfig c;
  c.iterations = 23;
  c.record_every = 10;
  const RunHistory h = run(d, c, nullptr);
  EXPECT_TRUE(h.loss_from_batches);
  ASSERT_EQ(h.records.size(), 23u);
  for (const auto& r : h.records) {
    const bool scheduled = r.k == 1 || r.k == 23 || r.k % 10 == 0;
    EXPECT_EQ(std::isfinite(r.psi_quadratic), scheduled) << "k = " << r.k;
  }
}

// Property: elimination keeps every residual at zero along a run.
TEST(Run, EliminationStaysFeasible) {
  const Discretization d = oracle::elliptic_toy(120, 90, 13);
  SolverConfig c;
  c.iterations = 60;
  c.record_every = 60;
  const RunHistory h = run(d, c, nullptr);
  for (std::size_t i = 0; i < d.num_points(); ++i) {
    const auto blk = d.layout[i];
    const Eigen::VectorXd zi = h.final_state.z.segment(static_cast<Eigen::Index>(blk.offset), blk.width);
    EXPECT_LE(std::abs(residual(d.problem, d.colloc, i, zi)), 1e-10 * std::max(1.0, zi.cwiseAbs().maxCoeff()));
  }
}

TEST(FinalSolve, HugeRhoKeepsState) {
  const Discretization d = oracle::elliptic_toy(12, 8, 21);
  SolverConfig c = tight(SolveMode::elimination, 1e-8);
  const BatchSystem full = assemble_batch(d, iota(12), c);
  const LatentState st = perturbed_state(d, c, 6, 0.4);
  const FinalSolution s = final_solve(d, full, st, c, 1e12);
  EXPECT_LE((s.state.z - st.z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FinalSolve, RhoZeroMatchesBruteForce) {
  const Discretization d = oracle::elliptic_toy(5, 3, 2);
  SolverConfig c = tight(SolveMode::elimination, 1e-6);
  const BatchSystem full = assemble_batch(d, iota(5), c);
  const LatentState st = initial_state(d, c);
  const FinalSolution s = final_solve(d, full, st, c, 0.0);
  const Eigen::VectorXd expected = oracle::prox_elimination(d, iota(5), st.z, 1e-6, 0.0);
  EXPECT_LE((s.state.z - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FinalSolve, LinearPenaltyIsRidge) {
  const Discretization d = oracle::linear_toy(10, 3);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  c.lambda_reg = 0.3;
  const BatchSystem full = assemble_batch(d, iota(10), c);
  const FinalSolution s = final_solve(d, full, initial_state(d, c), c, 0.0);
  const Eigen::VectorXd expected = oracle::ridge(d, 1e-6, 0.3);
  EXPECT_LE((s.state.z - expected).cwiseAbs().maxCoeff(), 1e-8);
}

// Property: A c = z_hat, so kappa(phi, phi) c differs from z_hat by exactly eta R c.
TEST(FinalSolve, RepresenterConsistency) {
  const Discretization d = oracle::elliptic_toy(9, 6, 5);
  SolverConfig c = tight(SolveMode::elimination, 1e-8);
  const BatchSystem full = assemble_batch(d, iota(9), c, true);
  const FinalSolution s = final_solve(d, full, initial_state(d, c), c, 0.0);
  const Eigen::VectorXd kc = full.gram * s.coefficients;
  const Eigen::VectorXd nug = full.eta * full.nugget_scale.cwiseProduct(s.coefficients);
  EXPECT_LE((kc + nug - s.state.z).norm(), 1e-6 * s.state.z.norm());
  for (std::size_t j = 0; j < full.size(); ++j) {
    const auto& f = full.functionals[j];
    double v = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
      v += eval_op_k(d.kernel, f.op, f.point, full.functionals[i].op, full.functionals[i].point) *
           s.coefficients[static_cast<Eigen::Index>(i)];
    }
    EXPECT_NEAR(v, kc[static_cast<Eigen::Index>(j)], 1e-8 * std::max(1.0, std::abs(v)));
  }
}

TEST(Predict, ZeroCoefficientsGiveZero) {
  const Discretization d = oracle::elliptic_toy(9, 6, 5);
  FinalSolution s;
  s.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.layout.total));
  EXPECT_EQ(predict_full(d, s, make_point({0.4, 0.6})), 0.0);
}

TEST(Predict, HomogeneousBoundaryPointIsInterpolated) {
  const Discretization d = oracle::elliptic_toy(30, 20, 8);
  SolverConfig c = tight(SolveMode::elimination, 1e-10);
  const BatchSystem full = assemble_batch(d, iota(30), c, true);
  const FinalSolution s = final_solve(d, full, initial_state(d, c), c, 0.0);
  const std::size_t b = d.colloc.num_interior();
  const double u = predict_full(d, s, d.colloc.point(b));
  // The boundary latent is pinned to 0, so the prediction equals -eta R c at that functional.
  const auto j = static_cast<Eigen::Index>(d.layout[b].offset);
  EXPECT_LE(std::abs(u), std::abs(full.eta * full.nugget_scale[j] * s.coefficients[j]) + 1e-12);
}

TEST(Predict, StrategiesAgreeWhenBatchIsEverything) {
  const Discretization d = oracle::elliptic_toy(12, 8, 3);
  SolverConfig c = tight(SolveMode::elimination, 1e-8);
  c.batch_size = 12;
  c.rho = 1.0;
  const BatchSystem full = assemble_batch(d, iota(12), c);
  const LatentState st = perturbed_state(d, c, 9, 0.2);
  const FinalSolution s = final_solve(d, full, st, c, c.rho);
  const SpatialIndex idx = make_index(d, c);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    const Point x = make_point({u(rng), u(rng)});
    EXPECT_NEAR(predict_full(d, s, x), predict_neighborhood(d, idx, st, c, x), 1e-8);
  }
}

TEST(Moreau, GradientIsScaledProxDisplacement) {
  const Discretization d = oracle::elliptic_toy(5, 3, 4);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  const BatchSystem full = assemble_batch(d, iota(5), c);
  const LatentState st = perturbed_state(d, c, 2, 0.3);
  for (double rho : {0.5, 2.0}) {
    const MoreauResult m = moreau_gradient(d, full, st, c, rho);
    EXPECT_LE((m.gradient - rho * (st.z - m.solution.state.z)).norm(), 1e-12 * std::max(1.0, m.gradient.norm()));
  }
  // Moving the centre further out along the same direction at fixed z_hat doubles the vector.
  const MoreauResult m = moreau_gradient(d, full, st, c, 1.0);
  const Eigen::VectorXd doubled = 1.0 * (2.0 * (st.z - m.solution.state.z));
  EXPECT_LE((doubled - 2.0 * m.gradient).norm(), 1e-15 * std::max(1.0, m.gradient.norm()));
}

TEST(Moreau, VanishesAtTheMinimizer) {
  const Discretization d = oracle::elliptic_toy(7, 4, 12);
  SolverConfig c = tight(SolveMode::elimination, 1e-6);
  const BatchSystem full = assemble_batch(d, iota(7), c);
  const FinalSolution star = final_solve(d, full, initial_state(d, c), c, 0.0);
  for (double rho : {0.1, 1.0, 10.0}) {
    EXPECT_LE(moreau_gradient(d, full, star.state, c, rho).gradient.norm(), 1e-8);
  }
}

TEST(Moreau, FiniteDifferenceDirectionalDerivative) {
  const Discretization d = oracle::elliptic_toy(5, 3, 7);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  c.gn_tol = 1e-13;
  const BatchSystem full = assemble_batch(d, iota(5), c);
  const LatentState st = perturbed_state(d, c, 3, 0.1);
  const double rho = 50.0, h = 1e-5;
  const MoreauResult g = moreau_gradient(d, full, st, c, rho);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd dir(st.z.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = n(rng);
    dir.normalize();
    LatentState p = st, m = st;
    p.z += h * dir;
    m.z -= h * dir;
    const double fd = (moreau_gradient(d, full, p, c, rho).envelope - moreau_gradient(d, full, m, c, rho).envelope) /
                      (2 * h);
    const double exact = g.gradient.dot(dir);
    EXPECT_LE(std::abs(fd - exact), 1e-4 * std::abs(exact)) << fd << " vs " << exact;
  }
}

TEST(Moreau, RhoMustBePositive) {
  const Discretization d = oracle::elliptic_toy(5, 3, 7);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  const BatchSystem full = assemble_batch(d, iota(5), c);
  EXPECT_THROW(moreau_gradient(d, full, initial_state(d, c), c, 0.0), InvalidArgument);
}

// Property: I - K (K + gamma I)^{-1} = gamma (K + gamma I)^{-1}.
TEST(SamplingIdentity, HoldsForRandomSpdMatrices) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> size(1, 20);
  for (int t = 0; t < 50; ++t) {
    const int m = size(rng);
    Eigen::MatrixXd b(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) b(i, j) = n(rng);
    }
    const Eigen::MatrixXd k = b * b.transpose() + 1e-3 * Eigen::MatrixXd::Identity(m, m);
    for (double gamma : {1e-3, 1.0, 1e3}) {
      EXPECT_LE(sampling_identity_residual(k, gamma), 1e-8);
      const Eigen::MatrixXd inv = (k + gamma * Eigen::MatrixXd::Identity(m, m)).inverse();
      const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m) - k * inv;
      EXPECT_LE((lhs - gamma * inv).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(WeakConvexity, CubicResidualOnClampedBox) {
  for (double clamp : {0.5, 1.0, 3.0}) {
    for (double c : {-5.0, 0.0, 2.0, 20.7}) {
      const WeakConvexityCheck w = weak_convexity_check(c, clamp);
      EXPECT_GE(w.min_second_difference, -1e-6) << "clamp " << clamp << " c " << c;
      const DiagnosticsConfig dc = DiagnosticsConfig::cubic_on_box(clamp, std::abs(c));
      EXPECT_EQ(w.mu, dc.mu);
    }
  }
}

TEST(Stability, IdenticalSwapHasZeroGap) {
  const Discretization d = oracle::linear_toy(40, 2);
  SolverConfig c = tight(SolveMode::penalty, 1e-6);
  c.sampler = SamplerKind::uniform;
  const std::vector<std::size_t> pts{1, 4, 9, 16};
  const LatentState st = initial_state(d, c);
  const BatchSystem s = assemble_batch(d, pts, c, true);
  const StepReport a = proximal_step(d, st, s, c), b = proximal_step(d, st, s, c);
  EXPECT_EQ(single_sample_objective(d, s, a.state.z, c, 20), single_sample_objective(d, s, b.state.z, c, 20));
}

