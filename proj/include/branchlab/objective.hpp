#pragma once

#include <array>
#include <string_view>

#include "branchlab/data.hpp"
#include "branchlab/model.hpp"

namespace branchlab {

enum class FdScheme { Forward, Central };

FdScheme parse_fd_scheme(std::string_view name);
std::string_view to_string(FdScheme scheme);

struct ObjectiveConfig {
  double alpha = 0.0;
  double fd_step = 1e-5;
  FdScheme fd_scheme = FdScheme::Central;
  ActivationKind activation = ActivationKind::Tanh;

  /// alpha >= 0 and fd_step in (1e-9, 1e-2).
  void validate() const;
};

/// Largest m*d for which dense Hessians are formed.
inline constexpr Eigen::Index kDenseHessianBudget = 2500;

/// 1/2 mean (f - y)^2 + alpha/2 ||W||_F^2.
double loss(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& cfg);

/// Gradient with respect to W (m x d).
MatrixXd grad(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& cfg);

/// Loss and gradient from a single forward pass.
double loss_and_grad(const ModelParams& theta, double lambda, const Dataset& data,
                     const ObjectiveConfig& cfg, MatrixXd& grad_out);

struct FdHessian {
  MatrixXd symmetric;        // (H + H^T) / 2
  MatrixXd raw;              // column j = FD of the gradient along e_j
  double symmetry_defect;    // ||H - H^T||_F / ||H||_F before symmetrization
};

/// Finite differences of grad in row-major vec(W) ordering. Throws SizeLimit when
/// m*d exceeds kDenseHessianBudget.
FdHessian hessian_fd(const ModelParams& theta, double lambda, const Dataset& data,
                     const ObjectiveConfig& cfg);

/// Closed-form Hessian: E[J J^T] + blockdiag(v_j E[r h''_j x x^T]) + alpha I.
/// Used as an independent route against hessian_fd.
MatrixXd hessian_analytic(const ModelParams& theta, double lambda, const Dataset& data,
                          const ObjectiveConfig& cfg);

/// D^k L along a -> L(W + a v0), k = 1..4, with the individual expectation terms kept.
struct DirectionalLossDerivs {
  std::array<double, 4> d{};  // D^1 L .. D^4 L
  // D^2 L = E[Df^2] + E[r D^2 f] + alpha
  double d2_gauss_newton = 0.0;
  double d2_residual = 0.0;
  // D^3 L = 3 E[Df D^2 f] + E[r D^3 f]
  double d3_mixed = 0.0;
  double d3_residual = 0.0;
  // D^4 L = 3 E[(D^2 f)^2] + 4 E[Df D^3 f] + E[r D^4 f]
  double d4_curvature_sq = 0.0;
  double d4_mixed = 0.0;
  double d4_residual = 0.0;
};

DirectionalLossDerivs directional_loss_derivs(const ModelParams& theta, double lambda,
                                              const KernelDirection& v0, const Dataset& data,
                                              const ObjectiveConfig& cfg);

/// Residuals f - y on the dataset.
VectorXd residuals(const ModelParams& theta, double lambda, const Dataset& data,
                   ActivationKind kind = ActivationKind::Tanh);

}  // namespace branchlab
