#pragma once

#include <optional>

#include "branchlab/data.hpp"
#include "branchlab/model.hpp"

namespace branchlab {

/// Spectrum of (v v^T) (x) Sigma + alpha I without assembling it.
struct EndpointSpectrum {
  double alpha = 0.0;
  VectorXd data_eigenvalues;     // ||v||^2 lambda_k(Sigma) + alpha, ascending
  double flat_eigenvalue = 0.0;  // alpha
  Eigen::Index flat_multiplicity = 0;  // (m - 1) d
  Eigen::Index kernel_dim_at_zero_alpha = 0;
  double cluster_gap = 0.0;      // smallest data eigenvalue minus alpha

  /// All m*d eigenvalues, ascending.
  VectorXd all_eigenvalues() const;
};

EndpointSpectrum kron_hessian_spectrum(const VectorXd& v, const MatrixXd& sigma, double alpha);

/// Dense (v v^T) (x) Sigma + alpha I in row-major vec ordering.
MatrixXd kron_hessian_dense(const VectorXd& v, const MatrixXd& sigma, double alpha);

struct EndpointSolution {
  MatrixXd W;
  bool rank_deficient = false;  // alpha = 0 and Sigma singular: minimum-norm solution returned
  double residual = 0.0;        // ||v v^T W Sigma + alpha W - v gamma^T||_F
};

/// Solves v v^T W Sigma + alpha W = v gamma^T. The solution is W = v_hat p^T with
/// (||v||^2 Sigma + alpha I) p = ||v|| gamma.
EndpointSolution solve_w0(const VectorXd& v, const MatrixXd& sigma, const VectorXd& gamma, double alpha);

/// Reference route through the dense md x md system.
MatrixXd solve_w0_dense(const VectorXd& v, const MatrixXd& sigma, const VectorXd& gamma, double alpha);

/// First-order softening of the flat eigenvalue cluster at lambda = 0.
///
/// On the flat subspace {v^T U = 0} the Gauss-Newton part of dH/dlambda vanishes
/// identically (J^T u = 0 there), so the cluster splits according to the residual
/// part blockdiag(v_j E[r0 sigma''(w_j^T x) x x^T]). `rate` is the most negative
/// eigenvalue of that operator restricted to the flat subspace and `u0` its eigenvector.
///
/// The diagonal Gauss-Newton form -sum_j v_j^2 u^T E[tanh^2(w_j^T x) x x^T] u and its
/// small-activation approximation (tanh^2 z -> z^2) are reported next to it.
struct SofteningReport {
  double rate = 0.0;
  VectorXd u0;                 // unit, length m*d, row-major vec
  VectorXd per_unit;           // u0_j^T B_j u0_j, sums to rate
  double k_estimate = 0.0;     // m * rate

  double diagonal_gn_rate = 0.0;
  VectorXd diagonal_gn_u0;
  VectorXd diagonal_gn_per_unit;
  double polynomial_rate = 0.0;  // z^2 form evaluated at diagonal_gn_u0
};

SofteningReport softening_rate(const VectorXd& v, const MatrixXd& W0, const Dataset& data);

/// -sum_j v_j^2 u_j^T E[(w_j^T x)^2 x x^T] u_j at the diagonal Gauss-Newton direction.
double polynomial_approx_rate(const VectorXd& v, const MatrixXd& W0, const Dataset& data);

/// alpha / |rate| when rate < 0.
std::optional<double> predict_lambda_star(double alpha, double rate);

}  // namespace branchlab
