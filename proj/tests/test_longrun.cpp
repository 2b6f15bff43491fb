#include "specbreak/longrun.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "specbreak/spectrum.hpp"

using namespace specbreak;

namespace {

FunctionalSeries random_series(int n, int dim, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd coeffs(n, dim);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < dim; ++l) coeffs(i, l) = normal(rng) / (l + 1);
  return FunctionalSeries(coeffs, fourier_basis(dim));
}

ScoreMatrix scores_for(const FunctionalSeries& series, int d) {
  CovarianceOperator c_full = partial_covariance(series, series.size());
  EigenSystem eig = eigen_decompose(c_full, d);
  return scores(series, eig, c_full);
}

KernelSpec with_bandwidth(KernelKind kind, double h) {
  KernelSpec spec;
  spec.kind = kind;
  spec.bandwidth = h;
  return spec;
}

}  // namespace

TEST(Scores, TwoPointExampleIsZero) {
  Eigen::MatrixXd coeffs(2, 1);
  coeffs << 1, -1;
  FunctionalSeries series(coeffs, fourier_basis(1));
  ScoreMatrix theta = scores_for(series, 1);
  EXPECT_NEAR(theta.scores(0, 0), 0.0, 1e-14);
  EXPECT_NEAR(theta.scores(1, 0), 0.0, 1e-14);
}

TEST(Scores, ColumnsSumToZero) {
  FunctionalSeries series = random_series(40, 6, 2);
  ScoreMatrix theta = scores_for(series, 4);
  EXPECT_LT(theta.scores.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(theta.col_means.cwiseAbs().maxCoeff(), 1e-12);
}

// The closed form <X_i - Xbar, phi_j>^2 - lambda_j must agree with the
// literal projection of (X-Xbar)(x)(X-Xbar) - C_hat onto phi_j (x) phi_j,
// both in coefficient space and by double quadrature on reconstructed curves.
TEST(Scores, MatchesProjectionIdentityAndQuadratureOracle) {
  FunctionalSeries series = random_series(30, 5, 13);
  const int n = series.size();
  CovarianceOperator c_full = partial_covariance(series, n);
  EigenSystem eig = eigen_decompose(c_full, 3);
  ScoreMatrix theta = scores(series, eig, c_full);

  Eigen::RowVectorXd mean = series.coeffs().colwise().mean();
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd u = (series.coeffs().row(i) - mean).transpose();
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd phi = eig.eigenvectors.col(j);
      double literal = phi.dot((u * u.transpose() - c_full.mat) * phi);
      EXPECT_NEAR(theta.scores(i, j), literal, 1e-12);
    }
  }

  const int points = 501;
  Eigen::MatrixXd curves = oracle::reconstruct(series.coeffs(), series.basis(), points);
  Eigen::MatrixXd phi_curves =
      oracle::reconstruct(eig.eigenvectors.transpose(), series.basis(), points);
  Eigen::MatrixXd grid_kernel = oracle::kernel_on_grid(curves, n);
  Eigen::VectorXd w = oracle::trapezoid_weights(points);
  Eigen::RowVectorXd curve_mean = curves.colwise().mean();
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd u = (curves.row(i) - curve_mean).transpose();
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd wphi = w.asDiagonal() * phi_curves.row(j).transpose();
      double by_quadrature = wphi.dot((u * u.transpose() - grid_kernel) * wphi);
      EXPECT_NEAR(theta.scores(i, j), by_quadrature, 1e-6);
    }
  }
}

TEST(Scores, DimensionMismatchRejected) {
  FunctionalSeries series = random_series(10, 3, 5);
  FunctionalSeries other = random_series(10, 4, 5);
  CovarianceOperator c_full = partial_covariance(other, 10);
  EigenSystem eig = eigen_decompose(c_full, 2);
  EXPECT_THROW(scores(series, eig, c_full), std::invalid_argument);
}

TEST(LrvMatrix, BandwidthCollapseGivesLagZeroTerm) {
  FunctionalSeries series = random_series(50, 4, 21);
  ScoreMatrix theta = scores_for(series, 3);
  Eigen::MatrixXd sigma = lrv_matrix(theta, with_bandwidth(KernelKind::Bartlett, 0.5));
  Eigen::MatrixXd centered = theta.scores.rowwise() - theta.scores.colwise().mean();
  Eigen::MatrixXd lag0 = centered.transpose() * centered / 50.0;
  EXPECT_LT((sigma - lag0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LrvMatrix, ConstantScoresGiveZero) {
  ScoreMatrix theta;
  theta.scores = Eigen::MatrixXd::Ones(30, 2) * 4.2;
  theta.col_means = Eigen::VectorXd::Constant(2, 4.2);
  Eigen::MatrixXd sigma = lrv_matrix(theta, KernelSpec::bartlett());
  EXPECT_LT(sigma.cwiseAbs().maxCoeff(), 1e-24);
}

TEST(LrvMatrix, Ar1ScoresMatchClosedFormOracle) {
  const int n = 50000;
  const double phi = 0.5;
  std::mt19937_64 rng(1903);
  std::normal_distribution<double> normal;
  ScoreMatrix theta;
  theta.scores.resize(n, 1);
  double x = 0.0;
  for (int i = 0; i < n; ++i) {
    x = phi * x + normal(rng);
    theta.scores(i, 0) = x;
  }
  theta.col_means = theta.scores.colwise().mean();
  double h = std::cbrt(static_cast<double>(n));
  double estimate = lrv_matrix(theta, with_bandwidth(KernelKind::Bartlett, h))(0, 0);
  double truth = oracle::ar1_long_run_variance(phi, 1.0);
  EXPECT_NEAR(estimate, truth, 0.05 * truth);
}

TEST(LrvMatrix, BartlettEstimateIsPsd) {
  FunctionalSeries series = random_series(60, 5, 77);
  ScoreMatrix theta = scores_for(series, 4);
  Eigen::MatrixXd sigma = lrv_matrix(theta, KernelSpec::bartlett());
  EXPECT_LT((sigma - sigma.transpose()).cwiseAbs().maxCoeff(), 1e-18);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma, Eigen::EigenvaluesOnly);
  EXPECT_GE(solver.eigenvalues().minCoeff(), -1e-10);
}

TEST(LrvMatrix, DiagonalMatchesScalarEstimator) {
  FunctionalSeries series = random_series(45, 4, 9);
  ScoreMatrix theta = scores_for(series, 3);
  KernelSpec kernel = with_bandwidth(KernelKind::Parzen, 4.0);
  Eigen::MatrixXd sigma = lrv_matrix(theta, kernel);
  for (int j = 0; j < 3; ++j) {
    double scalar = lrv_scalar(theta.scores.col(j), kernel);
    EXPECT_DOUBLE_EQ(sigma(j, j), scalar);
  }
}

TEST(LrvMatrix, ErrorPaths) {
  ScoreMatrix theta;
  theta.scores = Eigen::MatrixXd::Random(20, 2);
  EXPECT_THROW(lrv_matrix(theta, with_bandwidth(KernelKind::Bartlett, -1.0)),
               std::invalid_argument);
  EXPECT_THROW(lrv_matrix(theta, with_bandwidth(KernelKind::Bartlett, 25.0)),
               std::invalid_argument);
  theta.scores = Eigen::MatrixXd::Random(3, 2);
  EXPECT_THROW(lrv_matrix(theta, KernelSpec::bartlett()), std::invalid_argument);
}

TEST(LrvScalar, ConstantCollapseAndChiSquareOracle) {
  Eigen::VectorXd constant = Eigen::VectorXd::Ones(40) * 3.0;
  Diagnostics diag;
  double value = lrv_scalar(constant, KernelSpec::bartlett(), &diag);
  EXPECT_DOUBLE_EQ(value, std::numeric_limits<double>::epsilon());
  EXPECT_FALSE(diag.empty());

  const int n = 50000;
  std::mt19937_64 rng(55);
  std::normal_distribution<double> normal;
  Eigen::VectorXd xi(n);
  for (int i = 0; i < n; ++i) {
    double z = normal(rng);
    xi(i) = z * z;
  }
  double estimate = lrv_scalar(xi, with_bandwidth(KernelKind::Bartlett, std::cbrt(1.0 * n)));
  EXPECT_NEAR(estimate, 2.0, 0.10);  // Var(chi^2_1) = 2

  Eigen::VectorXd head = xi.head(200);
  double collapsed = lrv_scalar(head, with_bandwidth(KernelKind::Bartlett, 0.5));
  double variance = (head.array() - head.mean()).square().sum() / 200.0;
  EXPECT_DOUBLE_EQ(collapsed, variance);
}

TEST(InvertLrv, ExamplesAndResidualOracle) {
  Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_LT((invert_lrv(identity) - identity).cwiseAbs().maxCoeff(), 1e-14);

  Eigen::MatrixXd diag2 = Eigen::Vector2d(2.0, 0.5).asDiagonal();
  Eigen::MatrixXd expected = Eigen::Vector2d(0.5, 2.0).asDiagonal();
  EXPECT_LT((invert_lrv(diag2) - expected).cwiseAbs().maxCoeff(), 1e-14);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd root(5, 5);
  for (int i = 0; i < root.size(); ++i) root(i / 5, i % 5) = normal(rng);
  Eigen::MatrixXd spd = root * root.transpose() + Eigen::MatrixXd::Identity(5, 5);
  Eigen::MatrixXd product = spd * invert_lrv(spd);
  EXPECT_LT((product - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(InvertLrv, NearSingularCarriesSmallestEigenvalue) {
  Eigen::MatrixXd bad = Eigen::Vector2d(1.0, 1e-14).asDiagonal();
  try {
    invert_lrv(bad);
    FAIL() << "expected SingularLrv";
  } catch (const SingularLrv& err) {
    EXPECT_NEAR(err.smallest_eigenvalue, 1e-14, 1e-15);
    EXPECT_NE(std::string(err.what()).find("reducing d"), std::string::npos);
  }
}

TEST(LrvInvariants, ScaleEquivariance) {
  FunctionalSeries series = random_series(36, 4, 404);
  const double c = 3.0;
  FunctionalSeries scaled(series.coeffs() * c, series.basis());
  ScoreMatrix theta = scores_for(series, 3);
  ScoreMatrix theta_scaled = scores_for(scaled, 3);
  double c2 = c * c;
  EXPECT_LT((theta_scaled.scores - c2 * theta.scores).cwiseAbs().maxCoeff(), 1e-9);
  Eigen::MatrixXd sigma = lrv_matrix(theta, KernelSpec::bartlett());
  Eigen::MatrixXd sigma_scaled = lrv_matrix(theta_scaled, KernelSpec::bartlett());
  EXPECT_LT((sigma_scaled - c2 * c2 * sigma).cwiseAbs().maxCoeff(),
            1e-10 * sigma_scaled.cwiseAbs().maxCoeff());
}

TEST(KernelWeights, ShapeConditions) {
  for (KernelKind kind : {KernelKind::Bartlett, KernelKind::Parzen, KernelKind::FlatTop}) {
    EXPECT_DOUBLE_EQ(kernel_weight(kind, 0.0), 1.0);
    for (double u : {0.1, 0.35, 0.62, 0.99, 1.3}) {
      EXPECT_DOUBLE_EQ(kernel_weight(kind, u), kernel_weight(kind, -u));
      EXPECT_LE(std::abs(kernel_weight(kind, u)), 1.0);
    }
    EXPECT_DOUBLE_EQ(kernel_weight(kind, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(kernel_weight(kind, 2.0), 0.0);
  }
  EXPECT_DOUBLE_EQ(kernel_weight(KernelKind::Parzen, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(kernel_weight(KernelKind::FlatTop, 0.4), 1.0);
}
