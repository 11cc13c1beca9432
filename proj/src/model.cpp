#include "branchlab/model.hpp"

#include <cmath>

#include "branchlab/errors.hpp"

namespace branchlab {

void ModelParams::validate() const {
  if (W.rows() != v.size() || W.rows() == 0 || W.cols() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "W must be m x d with v of length m");
  }
}

KernelDirection::KernelDirection(MatrixXd blocks) : blocks_(std::move(blocks)) {
  const double norm = blocks_.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::DegenerateInput, "kernel direction must be nonzero and finite");
  }
  blocks_ /= norm;
}

KernelDirection KernelDirection::from_vec(const VectorXd& w, Eigen::Index m, Eigen::Index d) {
  return KernelDirection(unvec_rowmajor(w, m, d));
}

VectorXd graded_output_weights(Eigen::Index m) {
  if (m < 2) throw Error(ErrorCode::InvalidInput, "graded output weights need m >= 2");
  VectorXd v(m);
  for (Eigen::Index j = 0; j < m; ++j) v(j) = 0.5 + static_cast<double>(j) / static_cast<double>(m - 1);
  return v;
}

double forward(const ModelParams& theta, const VectorXd& x, double lambda, ActivationKind kind) {
  theta.validate();
  if (x.size() != theta.input_dim()) throw Error(ErrorCode::DimensionMismatch, "forward: x has wrong length");
  check_lambda(lambda);
  double f = 0.0;
  for (Eigen::Index j = 0; j < theta.width(); ++j) {
    f += theta.v(j) * h_deriv(theta.W.row(j).dot(x), lambda, 0, kind);
  }
  return f;
}

VectorXd forward_batch(const ModelParams& theta, const MatrixXd& X, double lambda, ActivationKind kind) {
  theta.validate();
  if (X.cols() != theta.input_dim()) throw Error(ErrorCode::DimensionMismatch, "forward_batch: X has wrong width");
  check_lambda(lambda);
  const MatrixXd Z = X * theta.W.transpose();
  VectorXd f(X.rows());
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < theta.width(); ++j) acc += theta.v(j) * h_deriv(Z(n, j), lambda, 0, kind);
    f(n) = acc;
  }
  return f;
}

namespace {

void check_direction(const ModelParams& theta, const KernelDirection& v0, int k_max) {
  theta.validate();
  if (v0.blocks().rows() != theta.width() || v0.blocks().cols() != theta.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel direction shape differs from W");
  }
  if (k_max < 1 || k_max > 4) throw Error(ErrorCode::UnsupportedOrder, "k_max must be in [1, 4]");
}

}  // namespace

DirectionalDerivs directional_derivs(const ModelParams& theta, double lambda, const KernelDirection& v0,
                                     const VectorXd& x, int k_max, ActivationKind kind) {
  check_direction(theta, v0, k_max);
  if (x.size() != theta.input_dim()) throw Error(ErrorCode::DimensionMismatch, "x has wrong length");
  DirectionalDerivs out{0.0, 0.0, 0.0, 0.0};
  for (Eigen::Index j = 0; j < theta.width(); ++j) {
    const HomotopyJet jet = h_jet(theta.W.row(j).dot(x), lambda, kind);
    const double p = v0.blocks().row(j).dot(x);
    double pk = 1.0;
    for (int k = 1; k <= k_max; ++k) {
      pk *= p;
      out[k - 1] += theta.v(j) * jet.d[k] * pk;
    }
  }
  return out;
}

MatrixXd directional_derivs_batch(const ModelParams& theta, double lambda, const KernelDirection& v0,
                                  const MatrixXd& X, int k_max, ActivationKind kind) {
  check_direction(theta, v0, k_max);
  if (X.cols() != theta.input_dim()) throw Error(ErrorCode::DimensionMismatch, "X has wrong width");
  const MatrixXd Z = X * theta.W.transpose();
  const MatrixXd P = X * v0.blocks().transpose();
  MatrixXd D = MatrixXd::Zero(X.rows(), 4);
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    for (Eigen::Index j = 0; j < theta.width(); ++j) {
      const HomotopyJet jet = h_jet(Z(n, j), lambda, kind);
      const double p = P(n, j);
      double pk = 1.0;
      for (int k = 1; k <= k_max; ++k) {
        pk *= p;
        D(n, k - 1) += theta.v(j) * jet.d[k] * pk;
      }
    }
  }
  return D;
}

ModelParams permute_units(const ModelParams& theta, const std::vector<int>& perm) {
  theta.validate();
  if (static_cast<Eigen::Index>(perm.size()) != theta.width()) {
    throw Error(ErrorCode::DimensionMismatch, "permutation length differs from width");
  }
  ModelParams out{MatrixXd(theta.W.rows(), theta.W.cols()), VectorXd(theta.v.size())};
  for (Eigen::Index j = 0; j < theta.width(); ++j) {
    out.W.row(j) = theta.W.row(perm[static_cast<size_t>(j)]);
    out.v(j) = theta.v(perm[static_cast<size_t>(j)]);
  }
  return out;
}

}  // namespace branchlab
