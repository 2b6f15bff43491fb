#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "specbreak/basis.hpp"
#include "specbreak/errors.hpp"

namespace specbreak {

using Diagnostics = std::vector<std::string>;

// ceil with a guard against FP noise in products like 0.1 * 500.
inline int ceil_index(double x) {
  return static_cast<int>(std::ceil(x - 1e-9));
}

// Coefficient representation of a covariance kernel: a D x D symmetric
// matrix, together with the sample fraction k/n it was computed from.
struct CovarianceOperator {
  Eigen::MatrixXd mat;
  double sample_fraction = 1.0;
};

struct EigenSystem {
  Eigen::VectorXd eigenvalues;   // length d, nonincreasing, clipped at 0
  Eigen::MatrixXd eigenvectors;  // D x d, orthonormal columns
  double max_clipped = 0.0;      // largest clipped |negative eigenvalue|
};

// Partial-sample eigenvalue trajectories on the grid k = ceil(n*delta)..n;
// row r of `values` holds the top-d eigenvalues at k = grid[r].
struct EigenProcess {
  std::vector<int> grid;
  Eigen::MatrixXd values;
  double delta = 0.0;
  int n = 0;
};

// Partial-sample trace trajectory; entry k-1 holds the value at k/n.
struct TraceProcess {
  Eigen::VectorXd values;
  int n = 0;
};

// (1/n) * sum_{i=1}^{k} (X_i - Xbar) (x) (X_i - Xbar) with the full-sample
// mean Xbar; note the 1/n normalization regardless of k.
inline CovarianceOperator partial_covariance(const FunctionalSeries& series, int k) {
  const int n = series.size();
  if (k < 1 || k > n) throw std::invalid_argument("partial sample size k must lie in 1..n");
  const Eigen::MatrixXd& coeffs = series.coeffs();
  Eigen::RowVectorXd mean = coeffs.colwise().mean();
  Eigen::MatrixXd centered = coeffs.topRows(k).rowwise() - mean;
  Eigen::MatrixXd mat = (centered.transpose() * centered) / n;
  mat = ((mat + mat.transpose()) / 2.0).eval();
  return CovarianceOperator{std::move(mat), static_cast<double>(k) / n};
}

// Top-d eigenpairs of a symmetric operator, eigenvalues descending, negative
// round-off eigenvalues clipped at 0, eigenvector sign fixed so the
// largest-magnitude coordinate is positive.
inline EigenSystem eigen_decompose(const CovarianceOperator& op, int d,
                                   Diagnostics* diag = nullptr) {
  const int dim = static_cast<int>(op.mat.rows());
  if (d < 1 || d > dim) throw std::invalid_argument("d must lie in 1..D");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op.mat);
  if (solver.info() != Eigen::Success) throw Error("eigendecomposition failed to converge");

  EigenSystem out;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(dim, d);
  for (int j = 0; j < d; ++j) {
    int src = dim - 1 - j;  // Eigen sorts ascending
    double lambda = solver.eigenvalues()(src);
    if (lambda < 0.0) {
      out.max_clipped = std::max(out.max_clipped, -lambda);
      lambda = 0.0;
    }
    out.eigenvalues(j) = lambda;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.eigenvectors.col(j) = v;
  }
  if (diag && out.max_clipped > 1e-8)
    diag->push_back("clipped negative eigenvalue of magnitude " +
                    std::to_string(out.max_clipped));
  return out;
}

// lambda_hat_j(k/n) for k = ceil(n*delta)..n, built by accumulating the
// partial covariance one rank-one term at a time.
inline EigenProcess eigenvalue_process(const FunctionalSeries& series, int d, double delta) {
  const int n = series.size();
  const int dim = series.dimension();
  if (d < 1 || d > dim) throw std::invalid_argument("d must lie in 1..D");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
  int k0 = std::max(1, ceil_index(n * delta));

  const Eigen::MatrixXd& coeffs = series.coeffs();
  Eigen::RowVectorXd mean = coeffs.colwise().mean();
  Eigen::MatrixXd centered = coeffs.rowwise() - mean;

  EigenProcess proc;
  proc.delta = delta;
  proc.n = n;
  proc.grid.reserve(n - k0 + 1);
  proc.values.resize(n - k0 + 1, d);

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < k0 - 1; ++i)
    acc += centered.row(i).transpose() * centered.row(i) / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dim);
  for (int k = k0; k <= n; ++k) {
    acc += centered.row(k - 1).transpose() * centered.row(k - 1) / n;
    proc.grid.push_back(k);
    solver.compute(acc, Eigen::EigenvaluesOnly);
    for (int j = 0; j < d; ++j)
      proc.values(k - k0, j) = std::max(0.0, solver.eigenvalues()(dim - 1 - j));
  }
  return proc;
}

// T_n(k/n) = (1/n) sum_{i<=k} ||X_i - Xbar||^2, k = 1..n.
inline TraceProcess trace_process(const FunctionalSeries& series) {
  const int n = series.size();
  const Eigen::MatrixXd& coeffs = series.coeffs();
  Eigen::RowVectorXd mean = coeffs.colwise().mean();
  TraceProcess proc;
  proc.n = n;
  proc.values.resize(n);
  double acc = 0.0;
  for (int k = 1; k <= n; ++k) {
    acc += (coeffs.row(k - 1) - mean).squaredNorm() / n;
    proc.values(k - 1) = acc;
  }
  return proc;
}

// Smallest d whose cumulative eigenvalue share reaches the threshold v.
inline int tve_dimension(const Eigen::VectorXd& eigenvalues, double v) {
  if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("TVE threshold must lie in (0,1)");
  if (eigenvalues.size() == 0 || eigenvalues.minCoeff() < 0.0)
    throw std::invalid_argument("eigenvalues must be nonnegative");
  double total = eigenvalues.sum();
  if (total <= 0.0) throw DegenerateSpectrum("all eigenvalues are zero");
  double acc = 0.0;
  for (int j = 0; j < eigenvalues.size(); ++j) {
    acc += eigenvalues(j);
    if (acc / total >= v) return j + 1;
  }
  return static_cast<int>(eigenvalues.size());
}

// Warns when the empirical spectral gap after component d is essentially zero
// relative to the leading eigenvalue.
inline void check_spectral_gap(const Eigen::VectorXd& full_spectrum, int d, Diagnostics& diag) {
  if (d >= full_spectrum.size()) return;
  double gap = full_spectrum(d - 1) - full_spectrum(d);
  if (full_spectrum(0) > 0.0 && gap < 1e-10 * full_spectrum(0))
    diag.push_back("spectral gap after component " + std::to_string(d) +
                   " is numerically zero; eigenvalue separation assumption is dubious");
}

}  // namespace specbreak
