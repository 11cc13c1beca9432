#include "branchlab/linear_endpoint.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "branchlab/activation.hpp"
#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

void check_sigma(const MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "Sigma must be square and nonempty");
  }
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorCode::InvalidInput, "Sigma is not symmetric");
  }
}

// Per-unit weighted second moments E[w(x) x x^T] for each unit j; weight(n, j) given.
std::vector<MatrixXd> weighted_moments(const MatrixXd& X, const MatrixXd& weight) {
  const double n = static_cast<double>(X.rows());
  std::vector<MatrixXd> out;
  out.reserve(static_cast<size_t>(weight.cols()));
  for (Eigen::Index j = 0; j < weight.cols(); ++j) {
    MatrixXd B = X.transpose() * weight.col(j).asDiagonal() * X / n;
    out.push_back(0.5 * (B + B.transpose()));
  }
  return out;
}

struct RestrictedMin {
  double value;
  VectorXd u;  // full md vector
  VectorXd per_unit;
};

// Most negative eigenpair of blockdiag(B_j) restricted to {U : v^T U = 0}.
RestrictedMin restricted_min(const VectorXd& v, const std::vector<MatrixXd>& blocks) {
  const Eigen::Index m = v.size();
  const Eigen::Index d = blocks.front().rows();
  const MatrixXd Q = orthogonal_complement(v);  // m x (m-1)
  const Eigen::Index k = Q.cols();
  MatrixXd R = MatrixXd::Zero(k * d, k * d);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a; b < k; ++b) {
      MatrixXd acc = MatrixXd::Zero(d, d);
      for (Eigen::Index j = 0; j < m; ++j) acc += Q(j, a) * Q(j, b) * blocks[static_cast<size_t>(j)];
      R.block(a * d, b * d, d, d) = acc;
      if (a != b) R.block(b * d, a * d, d, d) = acc.transpose();
    }
  }
  const SymmetricEigen eig = symmetric_eigen(R);
  const VectorXd c = eig.vectors.col(0);
  // Lift back: U = Q C with C the (m-1) x d coefficient matrix.
  const MatrixXd C = unvec_rowmajor(c, k, d);
  MatrixXd U = Q * C;
  // Deterministic sign: largest-magnitude entry positive.
  Eigen::Index idx;
  VectorXd u = vec_rowmajor(U);
  u.cwiseAbs().maxCoeff(&idx);
  if (u(idx) < 0) {
    u = -u;
    U = -U;
  }
  VectorXd per_unit(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const VectorXd uj = U.row(j).transpose();
    per_unit(j) = uj.dot(blocks[static_cast<size_t>(j)] * uj);
  }
  return {eig.values(0), u, per_unit};
}

void check_softening_inputs(const VectorXd& v, const MatrixXd& W0, const Dataset& data) {
  if (v.size() < 1 || v.norm() == 0.0) throw Error(ErrorCode::DegenerateInput, "v must be nonzero");
  if (W0.rows() != v.size() || W0.cols() != data.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "W0 shape does not match v and data");
  }
  if (v.size() < 2) throw Error(ErrorCode::DegenerateInput, "flat subspace is empty for m = 1");
}

}  // namespace

VectorXd EndpointSpectrum::all_eigenvalues() const {
  VectorXd out(flat_multiplicity + data_eigenvalues.size());
  out.head(flat_multiplicity).setConstant(flat_eigenvalue);
  out.tail(data_eigenvalues.size()) = data_eigenvalues;
  std::sort(out.data(), out.data() + out.size());
  return out;
}

EndpointSpectrum kron_hessian_spectrum(const VectorXd& v, const MatrixXd& sigma, double alpha) {
  check_sigma(sigma);
  if (v.size() < 1) throw Error(ErrorCode::DimensionMismatch, "v must be nonempty");
  const Eigen::Index m = v.size(), d = sigma.rows();
  const VectorXd lam = symmetric_eigen(sigma).values;
  const double vv = v.squaredNorm();
  EndpointSpectrum s;
  s.alpha = alpha;
  s.flat_eigenvalue = alpha;
  s.flat_multiplicity = (m - 1) * d;
  s.data_eigenvalues = (vv * lam).array() + alpha;
  Eigen::Index zero_data = 0;
  for (Eigen::Index k = 0; k < d; ++k) {
    if (std::abs(vv * lam(k)) <= 1e-10) ++zero_data;
  }
  s.kernel_dim_at_zero_alpha = s.flat_multiplicity + zero_data;
  s.cluster_gap = s.data_eigenvalues(0) - alpha;
  return s;
}

MatrixXd kron_hessian_dense(const VectorXd& v, const MatrixXd& sigma, double alpha) {
  const Eigen::Index m = v.size(), d = sigma.rows();
  MatrixXd H(m * d, m * d);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index k = 0; k < m; ++k) H.block(j * d, k * d, d, d) = v(j) * v(k) * sigma;
  }
  H.diagonal().array() += alpha;
  return H;
}

EndpointSolution solve_w0(const VectorXd& v, const MatrixXd& sigma, const VectorXd& gamma, double alpha) {
  check_sigma(sigma);
  if (gamma.size() != sigma.rows()) throw Error(ErrorCode::DimensionMismatch, "gamma length differs from d");
  if (alpha < 0.0) throw Error(ErrorCode::InvalidInput, "alpha must be >= 0");
  const Eigen::Index m = v.size(), d = sigma.rows();
  EndpointSolution sol;
  sol.W = MatrixXd::Zero(m, d);
  const double vn = v.norm();
  if (vn == 0.0) {
    // v = 0: equation reads alpha W = 0.
    sol.rank_deficient = alpha == 0.0;
    return sol;
  }
  const SymmetricEigen eig = symmetric_eigen(sigma);
  const VectorXd shifted = (vn * vn * eig.values).array() + alpha;
  const double tol = 1e-12 * std::max(1.0, shifted.cwiseAbs().maxCoeff());
  VectorXd coeff = eig.vectors.transpose() * (vn * gamma);
  for (Eigen::Index k = 0; k < d; ++k) {
    if (std::abs(shifted(k)) <= tol) {
      coeff(k) = 0.0;
      sol.rank_deficient = true;
    } else {
      coeff(k) /= shifted(k);
    }
  }
  const VectorXd p = eig.vectors * coeff;
  sol.W = (v / vn) * p.transpose();
  sol.residual = (v * (v.transpose() * sol.W * sigma) + alpha * sol.W - v * gamma.transpose()).norm();
  return sol;
}

MatrixXd solve_w0_dense(const VectorXd& v, const MatrixXd& sigma, const VectorXd& gamma, double alpha) {
  const MatrixXd H = kron_hessian_dense(v, sigma, alpha);
  const VectorXd rhs = vec_rowmajor(v * gamma.transpose());
  const VectorXd w = H.completeOrthogonalDecomposition().solve(rhs);
  return unvec_rowmajor(w, v.size(), sigma.rows());
}

SofteningReport softening_rate(const VectorXd& v, const MatrixXd& W0, const Dataset& data) {
  check_softening_inputs(v, W0, data);
  const Eigen::Index n = data.size(), m = v.size();
  const MatrixXd Z = data.X * W0.transpose();
  const VectorXd r0 = Z * v - data.y;

  MatrixXd residual_weight(n, m), gn_weight(n, m), poly_weight(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double z = Z(r, j);
      const double t = std::tanh(z);
      residual_weight(r, j) = v(j) * r0(r) * sigma_deriv(z, 2);
      gn_weight(r, j) = -v(j) * v(j) * t * t;
      poly_weight(r, j) = -v(j) * v(j) * z * z;
    }
  }
  SofteningReport rep;
  const RestrictedMin exact = restricted_min(v, weighted_moments(data.X, residual_weight));
  rep.rate = exact.value;
  rep.u0 = exact.u;
  rep.per_unit = exact.per_unit;
  rep.k_estimate = static_cast<double>(m) * rep.rate;

  const RestrictedMin gn = restricted_min(v, weighted_moments(data.X, gn_weight));
  rep.diagonal_gn_rate = gn.value;
  rep.diagonal_gn_u0 = gn.u;
  rep.diagonal_gn_per_unit = gn.per_unit;

  const std::vector<MatrixXd> poly = weighted_moments(data.X, poly_weight);
  const MatrixXd U = unvec_rowmajor(gn.u, m, data.dim());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const VectorXd uj = U.row(j).transpose();
    acc += uj.dot(poly[static_cast<size_t>(j)] * uj);
  }
  rep.polynomial_rate = acc;
  return rep;
}

double polynomial_approx_rate(const VectorXd& v, const MatrixXd& W0, const Dataset& data) {
  return softening_rate(v, W0, data).polynomial_rate;
}

std::optional<double> predict_lambda_star(double alpha, double rate) {
  if (!std::isfinite(rate)) throw Error(ErrorCode::InvalidInput, "rate must be finite");
  if (rate < 0.0) return alpha / std::abs(rate);
  return std::nullopt;
}

}  // namespace branchlab
