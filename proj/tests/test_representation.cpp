#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fsel/representation.hpp"
#include "oracles.hpp"

using namespace fsel;

TEST(Representation, TwoVariableInstance) {
  const DenseMatrix d{{1.0, 1.0}};
  const DenseMatrix n{{1.0, 0.0}, {0.0, 2.0}};
  const auto rep = optimal_representation(d, n, RealVector{1.0}, ConstraintSet::l1_ball(10, 2), 1.0);
  const auto [b1, cost] = oracle::two_variable_representation(n);
  EXPECT_NEAR(rep.beta_star[0], b1, 1e-6);
  EXPECT_NEAR(rep.beta_star[1], 1.0 - b1, 1e-6);
  EXPECT_NEAR(rep.sigma_star_sq, cost, 1e-6);
  EXPECT_NEAR(rep.beta_star[0], 0.8, 1e-3);
  EXPECT_NEAR(rep.beta_star[1], 0.2, 1e-3);
  EXPECT_NEAR(rep.sigma_star_sq, 0.8, 1e-3);
  EXPECT_NEAR(rep.tau_star, std::sqrt(1.8), 1e-6);
  EXPECT_NEAR(rep.lambda_star, 1.0 / std::sqrt(1.8), 1e-6);
  EXPECT_NEAR(rep.snr, 1.0 / 0.8, 1e-5);
}

TEST(Representation, NoNoiseAtoms) {
  RngStream r(1, 0);
  const DenseMatrix d = oracle::random_matrix(r, 3, 6);
  const RealVector z = oracle::random_vector(r, 3);
  const auto rep = optimal_representation(d, DenseMatrix(0, 6), z, ConstraintSet::l1_ball(100, 6), 0.8);
  EXPECT_EQ(rep.sigma_star_sq, 0.0);
  EXPECT_TRUE(std::isinf(rep.snr));
  EXPECT_LE(rep.feasibility_residual, 1e-8);
}

TEST(Representation, EqualityDetermined) {
  RngStream r(2, 0);
  const DenseMatrix n = oracle::random_matrix(r, 4, 3);
  const RealVector z{0.6, 0.0, -0.8};
  const auto rep = optimal_representation(DenseMatrix::identity(3), n, z, ConstraintSet::l1_ball(100, 3), 1.0);
  EXPECT_LT(norm_inf(subtract(rep.beta_star, z)), 1e-8);
  const RealVector nz = matvec(n, z);
  EXPECT_NEAR(rep.sigma_star_sq, dot(nz, nz), 1e-8);
}

TEST(Representation, ActiveConstraintUsesFallback) {
  // The unconstrained minimizer has l1 norm above R/mu, so the ball binds.
  const DenseMatrix d{{1.0, 1.0, 1.0}};
  const DenseMatrix n{{1.0, 0.0, -1.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 0.1}};
  const double mu = 0.5;
  const auto k = ConstraintSet::l1_ball(0.6, 3);
  const auto rep = optimal_representation(d, n, RealVector{1.0}, k, mu);
  EXPECT_LE(rep.feasibility_residual, 1e-6);
  EXPECT_LE(norm1(scaled(rep.beta_star, mu)), 0.6 + 1e-6);
  // Brute force over the feasible slice b3 = 1 - b1 - b2 with |mu b|_1 <= 0.6.
  double best = INFINITY;
  for (int i = 0; i <= 1200; ++i)
    for (int j = 0; j <= 1200; ++j) {
      const double b1 = -1.2 + 2.4 * i / 1200.0, b2 = -1.2 + 2.4 * j / 1200.0, b3 = 1.0 - b1 - b2;
      if (mu * (std::abs(b1) + std::abs(b2) + std::abs(b3)) > 0.6) continue;
      const RealVector nb = matvec(n, RealVector{b1, b2, b3});
      best = std::min(best, dot(nb, nb));
    }
  EXPECT_LE(rep.sigma_star_sq, best + 1e-6);
  EXPECT_GE(rep.sigma_star_sq, best - 1e-2);
}

TEST(Representation, InfeasibleIsReported) {
  const DenseMatrix d{{1.0, 1.0}};
  EXPECT_THROW(optimal_representation(d, DenseMatrix::identity(2), RealVector{1.0}, ConstraintSet::l1_ball(0.1, 2), 1.0),
               InfeasibleRepresentationError);
  // D not surjective onto z*.
  const DenseMatrix d2{{1.0, 1.0}, {2.0, 2.0}};
  EXPECT_THROW(optimal_representation(d2, DenseMatrix::identity(2), RealVector{1.0, 0.0}, ConstraintSet::l1_ball(10, 2), 1.0),
               InfeasibleRepresentationError);
}

TEST(Representation, PerturbationOptimality) {
  RngStream r(3, 0);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t p = 1 + r.below(5);
    const std::size_t dim = p + 1 + r.below(10 - p);
    const std::size_t q = 1 + r.below(dim);
    const DenseMatrix d = oracle::random_matrix(r, p, dim);
    const DenseMatrix n = oracle::random_matrix(r, q, dim);
    const RealVector z = oracle::random_vector(r, p);
    const double mu = 0.5 + r.uniform();
    // Radius large enough to be feasible, sometimes binding.
    const Eigen::MatrixXd de = oracle::to_eigen(d);
    const Eigen::VectorXd ze = Eigen::Map<const Eigen::VectorXd>(z.data(), p);
    const Eigen::VectorXd minnorm = de.transpose() * (de * de.transpose()).ldlt().solve(ze);
    const double radius = mu * minnorm.lpNorm<1>() * (1.2 + 2.0 * r.uniform());
    const auto k = ConstraintSet::l1_ball(radius, dim);
    const auto rep = optimal_representation(d, n, z, k, mu);
    ASSERT_LE(rep.feasibility_residual, 1e-4 * norm2(z));
    const RealVector nb = matvec(n, rep.beta_star);
    EXPECT_NEAR(rep.sigma_star_sq, dot(nb, nb), 1e-9);

    // Feasible perturbations: move along the null space of D, then pull back
    // into {mu b in K} along the segment towards the min-norm solution.
    const Eigen::MatrixXd null = Eigen::FullPivLU<Eigen::MatrixXd>(de).kernel();
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rep.beta_star.data(), dim);
      Eigen::VectorXd c(null.cols());
      for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = 0.3 * r.normal();
      b += null * c;
      for (int s = 0; s < 60 && mu * b.lpNorm<1>() > radius; ++s) b = 0.5 * (b + minnorm);
      if (mu * b.lpNorm<1>() > radius) continue;
      const Eigen::VectorXd nbp = oracle::to_eigen(n) * b;
      EXPECT_GE(nbp.squaredNorm(), rep.sigma_star_sq - 1e-6);
    }
  }
}

TEST(Representation, ZeroMuLeavesConstraintOut) {
  const DenseMatrix d{{1.0, 1.0}};
  const DenseMatrix n{{1.0, 0.0}, {0.0, 2.0}};
  const auto rep = optimal_representation(d, n, RealVector{1.0}, ConstraintSet::l1_ball(0.01, 2), 0.0);
  EXPECT_NEAR(rep.sigma_star_sq, 0.8, 1e-6);
  EXPECT_EQ(rep.lambda_star, 0.0);
}

TEST(Rescaled, NoNoiseReproducesCleanLabels) {
  RngStream r(4, 0);
  const DenseMatrix a = oracle::random_matrix(r, 8, 3);
  const RealVector z = FactorModel::normalize_signal(DenseMatrix::identity(3), {1, -1, 0.5});
  for (const auto& f : {Nonlinearity::sign(), Nonlinearity::identity()}) {
    const FactorModel model(a, DenseMatrix(8, 0), DenseMatrix::identity(3), z, f);
    const auto rep = optimal_representation(model.feature_dictionary(), DenseMatrix(0, 8), z,
                                            ConstraintSet::l1_ball(100, 8), 1.0);
    const SampleSet ss = sample(model, 200, r);
    const RealVector ydd = rescaled_outputs(ss, rep.beta_star, f, rep.tau_star);
    EXPECT_NEAR(rep.tau_star, 1.0, 1e-12);
    EXPECT_LT(noise_parameter(ss.y0, ydd), 1e-8);
  }
}

TEST(Rescaled, SharedNuisance) {
  // Two-channel model: x = (s + sqrt(2) sigma n1, s + sqrt(2) sigma n2), beta* = (1/2, 1/2).
  const double sigma = 0.7;
  const DenseMatrix a{{1.0}, {1.0}};
  const DenseMatrix b{{std::sqrt(2.0) * sigma, 0.0}, {0.0, std::sqrt(2.0) * sigma}};
  const auto f = Nonlinearity::linear_noise(0.9, 0.4);
  const FactorModel model(a, b, DenseMatrix::identity(1), {1.0}, f);
  const auto rep = optimal_representation(model.feature_dictionary(), model.noise_dictionary(), RealVector{1.0},
                                          ConstraintSet::l1_ball(10, 2), 0.9);
  EXPECT_NEAR(rep.sigma_star_sq, sigma * sigma, 1e-9);
  RngStream r(5, 0);
  const SampleSet ss = sample(model, 50, r);
  const RealVector ydd = rescaled_outputs(ss, rep.beta_star, f, rep.tau_star);
  for (std::size_t i = 0; i < ss.m(); ++i) {
    const double sn = ss.s(i, 0) + sigma * (ss.noise(i, 0) + ss.noise(i, 1)) / std::sqrt(2.0);
    EXPECT_NEAR(ydd[i], 0.9 * sn / rep.tau_star + 0.4 * ss.nuisance[i], 1e-12);
    EXPECT_NEAR(ss.y[i], 0.9 * ss.s(i, 0) + 0.4 * ss.nuisance[i], 1e-12);
  }
}

TEST(NoiseParameter, Examples) {
  const RealVector a{1, -1, 1, 1};
  EXPECT_EQ(noise_parameter(a, a), 0.0);
  EXPECT_NEAR(noise_parameter(RealVector{1, 0, 0, 0}, RealVector(4, 0.0)), 0.5, 1e-15);
  EXPECT_NEAR(noise_parameter(a, RealVector{-1, -1, 1, 1}), 2.0 * std::sqrt(0.25), 1e-15);
  EXPECT_THROW(noise_parameter(a, RealVector(3)), ShapeError);
}

TEST(ClosedForms, BitflipProbability) {
  EXPECT_EQ(bitflip_probability(0.0), 0.0);
  EXPECT_LT(bitflip_probability(1e-9), 1e-9);
  EXPECT_NEAR(bitflip_probability(1.0), 0.25, 1e-15);
  EXPECT_NEAR(bitflip_probability(1e12), 0.5, 1e-9);
  EXPECT_LT(bitflip_probability(1e12), 0.5);
}

TEST(ClosedForms, LinearMismatch) {
  EXPECT_EQ(linear_mismatch_std(0.0), 0.0);
  EXPECT_NEAR(linear_mismatch_std(std::sqrt(3.0)), 1.0, 1e-15);
  EXPECT_LT(linear_mismatch_std(0.1), linear_mismatch_std(1.0));
}

TEST(ClosedForms, FlipFractionMatchesSimulation) {
  // sign(s) vs sign(s + n*) with n* ~ N(0, sigma*^2).
  for (double sigma : {0.1, 0.5, 1.0}) {
    RngStream r(6, static_cast<std::uint64_t>(sigma * 10));
    const std::size_t m = 100000;
    std::size_t flips = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = r.normal(), n = sigma * r.normal();
      flips += sign_of(s) != sign_of(s + n);
    }
    const double p = bitflip_probability(sigma);
    EXPECT_NEAR(double(flips) / m, p, 3.0 * std::sqrt(p * (1 - p) / m)) << sigma;
  }
}

TEST(SelectionError, Examples) {
  const RealVector z{0.6, 0.8};
  EXPECT_EQ(selection_error(scaled(z, 0.7), z, 0.7), 0.0);
  EXPECT_NEAR(selection_error(RealVector(2, 0.0), z, 0.7), 0.7, 1e-15);
  const DenseMatrix root{{2, 0}, {0, 1}};
  EXPECT_NEAR(selection_error(RealVector{1.0 + 0.3, 1.0 + 0.4}, RealVector{0.6, 0.8}, 0.5, &root), std::sqrt(5.0), 1e-12);
  EXPECT_THROW(selection_error(RealVector(3), z, 1.0), ShapeError);
}
