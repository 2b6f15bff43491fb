#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "specbreak/errors.hpp"
#include "specbreak/spectrum.hpp"

namespace specbreak {

// Kernel lag-window weight function: symmetric, w(0)=1, |w|<=1, support [-1,1].
enum class KernelKind { Bartlett, Parzen, FlatTop };

struct KernelSpec {
  KernelKind kind = KernelKind::Bartlett;
  std::optional<double> bandwidth;  // empty = auto: floor(n^(1/3))

  static KernelSpec bartlett() { return KernelSpec{}; }
};

inline double kernel_weight(KernelKind kind, double u) {
  double a = std::abs(u);
  if (a >= 1.0) return 0.0;
  switch (kind) {
    case KernelKind::Bartlett:
      return 1.0 - a;
    case KernelKind::Parzen:
      return a <= 0.5 ? 1.0 - 6.0 * a * a + 6.0 * a * a * a
                      : 2.0 * std::pow(1.0 - a, 3);
    case KernelKind::FlatTop:
      return a <= 0.5 ? 1.0 : 2.0 * (1.0 - a);
  }
  return 0.0;
}

inline const char* kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Bartlett: return "bartlett";
    case KernelKind::Parzen: return "parzen";
    case KernelKind::FlatTop: return "flattop";
  }
  return "?";
}

inline double resolve_bandwidth(const KernelSpec& spec, int n) {
  double h = spec.bandwidth ? *spec.bandwidth : std::floor(std::cbrt(static_cast<double>(n)));
  if (h <= 0.0) throw std::invalid_argument("bandwidth must be positive");
  if (h >= n) throw std::invalid_argument("bandwidth must be smaller than the sample size");
  return h;
}

// n x d matrix of estimated scores theta_hat_{i,j}; columns sum to zero by
// the empirical eigenvalue identity, and the realized column means are kept
// alongside.
struct ScoreMatrix {
  Eigen::MatrixXd scores;
  Eigen::VectorXd col_means;
};

// theta_hat_{i,j} = <X_i - Xbar, phi_hat_j>^2 - lambda_hat_j, the coefficient
// form of the projection of (X-Xbar)(x)(X-Xbar) - C_hat onto phi_j (x) phi_j.
inline ScoreMatrix scores(const FunctionalSeries& series, const EigenSystem& eig,
                          const CovarianceOperator& c_full) {
  const int n = series.size();
  const int dim = series.dimension();
  const int d = static_cast<int>(eig.eigenvalues.size());
  if (eig.eigenvectors.rows() != dim || c_full.mat.rows() != dim)
    throw std::invalid_argument("dimension mismatch between series, eigensystem and operator");

  Eigen::RowVectorXd mean = series.coeffs().colwise().mean();
  Eigen::MatrixXd centered = series.coeffs().rowwise() - mean;
  Eigen::MatrixXd proj = centered * eig.eigenvectors;  // n x d inner products

  ScoreMatrix out;
  out.scores = proj.array().square().matrix().rowwise() -
               eig.eigenvalues.transpose();
  out.col_means = out.scores.colwise().mean();
  return out;
}

namespace detail {

// sum_l w(l/h) Gamma_hat_l with Gamma_hat_l the 1/n lagged cross-product of
// demeaned rows; shared by the matrix and scalar estimators so their
// arithmetic is identical entry for entry.
inline Eigen::MatrixXd kernel_lag_sum(const Eigen::MatrixXd& rows, KernelKind kind, double h) {
  const int n = static_cast<int>(rows.rows());
  const int d = static_cast<int>(rows.cols());
  Eigen::RowVectorXd mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - mean;

  int max_lag = std::min(n - 1, static_cast<int>(std::ceil(h)));
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double w = kernel_weight(kind, lag / h);
    if (w == 0.0) continue;
    int lo = std::max(0, -lag);          // 0-based first index i with both i, i+lag valid
    int count = n - std::abs(lag);
    Eigen::MatrixXd gamma =
        centered.middleRows(lo, count).transpose() * centered.middleRows(lo + lag, count) / n;
    acc += w * gamma;
  }
  return acc;
}

}  // namespace detail

// Long-run covariance matrix of the score rows (kernel lag-window estimator),
// symmetrized as (S + S^T)/2.
inline Eigen::MatrixXd lrv_matrix(const ScoreMatrix& score_matrix, const KernelSpec& kernel) {
  const int n = static_cast<int>(score_matrix.scores.rows());
  if (n < 4) throw std::invalid_argument("long-run covariance needs n >= 4");
  double h = resolve_bandwidth(kernel, n);
  Eigen::MatrixXd acc = detail::kernel_lag_sum(score_matrix.scores, kernel.kind, h);
  return (acc + acc.transpose()) / 2.0;
}

// Scalar long-run variance of xi_i = ||X_i - Xbar||^2. Negative estimates are
// floored at machine epsilon with a warning.
inline double lrv_scalar(const Eigen::VectorXd& xi, const KernelSpec& kernel,
                         Diagnostics* diag = nullptr) {
  const int n = static_cast<int>(xi.size());
  if (n < 4) throw std::invalid_argument("long-run variance needs n >= 4");
  double h = resolve_bandwidth(kernel, n);
  double value = detail::kernel_lag_sum(xi, kernel.kind, h)(0, 0);
  if (value < std::numeric_limits<double>::epsilon()) {
    if (diag)
      diag->push_back("long-run variance estimate " + std::to_string(value) +
                      " floored at machine epsilon");
    value = std::numeric_limits<double>::epsilon();
  }
  return value;
}

// Inverse via symmetric eigendecomposition; refuses condition numbers
// beyond 1e12.
inline Eigen::MatrixXd invert_lrv(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("matrix must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition failed to converge");
  double min_ev = solver.eigenvalues().minCoeff();
  double max_ev = solver.eigenvalues().maxCoeff();
  if (min_ev <= 0.0 || max_ev / min_ev > 1e12)
    throw SingularLrv(
        "long-run covariance is numerically singular (smallest eigenvalue " +
            std::to_string(min_ev) + "); consider reducing d",
        min_ev);
  return solver.eigenvectors() * solver.eigenvalues().cwiseInverse().asDiagonal() *
         solver.eigenvectors().transpose();
}

}  // namespace specbreak
