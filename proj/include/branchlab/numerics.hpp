#pragma once

#include <Eigen/Dense>
#include <span>

namespace branchlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Pairwise (cascade) summation; the result depends only on the input order,
/// not on how a caller might partition the work.
double pairwise_sum(std::span<const double> values);
double pairwise_mean(std::span<const double> values);

inline double pairwise_mean(const VectorXd& values) {
  return pairwise_mean(std::span<const double>(values.data(), static_cast<size_t>(values.size())));
}

/// vec(W) in row-major (unit, input) order: index j * d + i.
VectorXd vec_rowmajor(const MatrixXd& W);
MatrixXd unvec_rowmajor(const VectorXd& w, Eigen::Index rows, Eigen::Index cols);

/// Sorted eigen-decomposition of a symmetric matrix (ascending values).
struct SymmetricEigen {
  VectorXd values;
  MatrixXd vectors;
};
SymmetricEigen symmetric_eigen(const MatrixXd& A);

/// Orthonormal basis (columns) of the orthogonal complement of a nonzero vector.
MatrixXd orthogonal_complement(const VectorXd& v);

/// Ordinary least squares y ~ X beta; returns beta. Rank-deficient designs throw.
VectorXd least_squares(const MatrixXd& X, const VectorXd& y);

/// Coefficient of determination for a fitted line.
double r_squared(const VectorXd& y, const VectorXd& fitted);

}  // namespace branchlab
