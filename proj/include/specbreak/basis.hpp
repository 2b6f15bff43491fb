#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "specbreak/errors.hpp"

namespace specbreak {

// Orthonormal basis on [0,1]. Fourier ordering is
//   v_1(t) = 1, v_{2k}(t) = sqrt(2) sin(2 pi k t), v_{2k+1}(t) = sqrt(2) cos(2 pi k t),
// truncated at `dimension` functions.
class BasisSystem {
 public:
  enum class Kind { Fourier };

  BasisSystem(Kind kind, int dimension) : kind_(kind), dimension_(dimension) {
    if (dimension < 1) throw std::invalid_argument("basis dimension must be >= 1");
  }

  Kind kind() const { return kind_; }
  int dimension() const { return dimension_; }

  // Value of the ell-th basis function (1-based) at t in [0,1].
  double evaluate(int ell, double t) const {
    if (ell < 1 || ell > dimension_) throw std::invalid_argument("basis index out of range");
    if (ell == 1) return 1.0;
    const double sqrt2 = std::numbers::sqrt2;
    int k = ell / 2;
    double arg = 2.0 * std::numbers::pi * k * t;
    return (ell % 2 == 0) ? sqrt2 * std::sin(arg) : sqrt2 * std::cos(arg);
  }

  // G x D matrix of all basis functions evaluated on a grid of points.
  Eigen::MatrixXd evaluate_on(const std::vector<double>& points) const {
    Eigen::MatrixXd out(points.size(), dimension_);
    for (int g = 0; g < static_cast<int>(points.size()); ++g)
      for (int ell = 1; ell <= dimension_; ++ell)
        out(g, ell - 1) = evaluate(ell, points[g]);
    return out;
  }

  friend bool operator==(const BasisSystem& a, const BasisSystem& b) {
    return a.kind_ == b.kind_ && a.dimension_ == b.dimension_;
  }

 private:
  Kind kind_;
  int dimension_;
};

inline BasisSystem fourier_basis(int dimension) {
  return BasisSystem(BasisSystem::Kind::Fourier, dimension);
}

// Equally spaced grid of G points covering [0,1] (endpoints included).
inline std::vector<double> unit_grid(int points) {
  if (points < 1) throw std::invalid_argument("grid needs at least one point");
  std::vector<double> grid(points);
  if (points == 1) {
    grid[0] = 0.5;
    return grid;
  }
  for (int g = 0; g < points; ++g) grid[g] = static_cast<double>(g) / (points - 1);
  return grid;
}

// n curves stored as coefficient vectors (one row per curve) in an
// orthonormal basis, so ||X_i||^2 is the squared Euclidean norm of row i.
class FunctionalSeries {
 public:
  FunctionalSeries(Eigen::MatrixXd coeffs, BasisSystem basis)
      : coeffs_(std::move(coeffs)), basis_(std::move(basis)) {
    if (coeffs_.rows() < 2) throw InvalidData("a functional series needs at least 2 curves");
    if (coeffs_.cols() != basis_.dimension())
      throw InvalidData("coefficient columns do not match basis dimension");
    if (!coeffs_.allFinite()) throw InvalidData("non-finite coefficient encountered");
  }

  int size() const { return static_cast<int>(coeffs_.rows()); }
  int dimension() const { return static_cast<int>(coeffs_.cols()); }
  const Eigen::MatrixXd& coeffs() const { return coeffs_; }
  const BasisSystem& basis() const { return basis_; }

 private:
  Eigen::MatrixXd coeffs_;
  BasisSystem basis_;
};

// Least-squares projection of one sampled curve (its own grid length) onto
// the basis, via the normal equations.
inline Eigen::VectorXd fit_curve(const std::vector<double>& samples, const BasisSystem& basis) {
  const int grid_size = static_cast<int>(samples.size());
  const int dim = basis.dimension();
  if (grid_size < dim)
    throw UnderdeterminedFit("curve has fewer samples than basis functions");
  Eigen::Map<const Eigen::VectorXd> y(samples.data(), grid_size);
  if (!y.allFinite()) throw InvalidData("non-finite sample encountered");
  Eigen::MatrixXd design = basis.evaluate_on(unit_grid(grid_size));
  Eigen::MatrixXd gram = design.transpose() * design;
  return gram.ldlt().solve(design.transpose() * y);
}

// Fit every row of a raw sample matrix (curves on a shared regular grid).
inline FunctionalSeries smooth_to_basis(const Eigen::MatrixXd& raw, const BasisSystem& basis) {
  const int n = static_cast<int>(raw.rows());
  const int grid_size = static_cast<int>(raw.cols());
  const int dim = basis.dimension();
  if (grid_size < dim)
    throw UnderdeterminedFit("grid has fewer points than basis functions");
  if (!raw.allFinite()) throw InvalidData("non-finite sample encountered");
  Eigen::MatrixXd design = basis.evaluate_on(unit_grid(grid_size));
  Eigen::LDLT<Eigen::MatrixXd> gram(design.transpose() * design);
  Eigen::MatrixXd coeffs(n, dim);
  for (int i = 0; i < n; ++i)
    coeffs.row(i) = gram.solve(design.transpose() * raw.row(i).transpose()).transpose();
  return FunctionalSeries(std::move(coeffs), basis);
}

// Ragged variant: each curve fitted on its own grid length (365/366-point
// rows coexist).
inline FunctionalSeries smooth_to_basis(const std::vector<std::vector<double>>& raw,
                                        const BasisSystem& basis) {
  Eigen::MatrixXd coeffs(raw.size(), basis.dimension());
  for (std::size_t i = 0; i < raw.size(); ++i)
    coeffs.row(i) = fit_curve(raw[i], basis).transpose();
  return FunctionalSeries(std::move(coeffs), basis);
}

// Subtracts the sample mean within each segment delimited by `breaks`
// (1-based indices; a break at k splits after curve k). Empty list means
// global demeaning. Idempotent.
inline FunctionalSeries center_and_segment_demean(const FunctionalSeries& series,
                                                  const std::vector<int>& breaks = {}) {
  const int n = series.size();
  int prev = 0;
  for (int b : breaks) {
    if (b < 1 || b > n - 1) throw std::invalid_argument("mean break index out of range 1..n-1");
    if (b <= prev) throw std::invalid_argument("mean break indices must be strictly increasing");
    prev = b;
  }
  Eigen::MatrixXd coeffs = series.coeffs();
  std::vector<int> bounds;
  bounds.push_back(0);
  for (int b : breaks) bounds.push_back(b);
  bounds.push_back(n);
  for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
    int lo = bounds[s], hi = bounds[s + 1];
    auto block = coeffs.middleRows(lo, hi - lo);
    Eigen::RowVectorXd mean = block.colwise().mean();
    block.rowwise() -= mean;
  }
  return FunctionalSeries(std::move(coeffs), series.basis());
}

}  // namespace specbreak
