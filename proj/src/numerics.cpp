#include "branchlab/numerics.hpp"

#include <cmath>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {
constexpr size_t kPairwiseLeaf = 32;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= kPairwiseLeaf) {
    double acc = 0.0;
    for (double x : values) acc += x;
    return acc;
  }
  const size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double pairwise_mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidInput, "mean of empty range");
  return pairwise_sum(values) / static_cast<double>(values.size());
}

VectorXd vec_rowmajor(const MatrixXd& W) {
  VectorXd w(W.size());
  const Eigen::Index d = W.cols();
  for (Eigen::Index j = 0; j < W.rows(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) w(j * d + i) = W(j, i);
  }
  return w;
}

MatrixXd unvec_rowmajor(const VectorXd& w, Eigen::Index rows, Eigen::Index cols) {
  if (w.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "unvec: size does not match rows*cols");
  }
  MatrixXd W(rows, cols);
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (Eigen::Index i = 0; i < cols; ++i) W(j, i) = w(j * cols + i);
  }
  return W;
}

SymmetricEigen symmetric_eigen(const MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(A);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::Numerical, "symmetric eigensolver failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

MatrixXd orthogonal_complement(const VectorXd& v) {
  const double norm = v.norm();
  if (norm == 0.0) throw Error(ErrorCode::DegenerateInput, "complement of the zero vector");
  // Householder reflector mapping v/|v| to e_1; its remaining columns span v-perp.
  const Eigen::Index n = v.size();
  VectorXd u = v / norm;
  u(0) += (u(0) >= 0.0 ? 1.0 : -1.0);
  MatrixXd Q = MatrixXd::Identity(n, n) - 2.0 * u * u.transpose() / u.squaredNorm();
  return Q.rightCols(n - 1);
}

VectorXd least_squares(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size()) throw Error(ErrorCode::DimensionMismatch, "least squares: rows");
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  qr.setThreshold(1e-12);
  if (qr.rank() < X.cols()) throw Error(ErrorCode::Fit, "rank-deficient least-squares design");
  return qr.solve(y);
}

double r_squared(const VectorXd& y, const VectorXd& fitted) {
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  const double ss_res = (y - fitted).squaredNorm();
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

}  // namespace branchlab
