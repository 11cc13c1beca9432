#pragma once

#include <array>
#include <vector>

#include "branchlab/activation.hpp"
#include "branchlab/numerics.hpp"

namespace branchlab {

/// theta = (W, v) for f(x) = sum_j v_j h(w_j^T x, lambda).
struct ModelParams {
  MatrixXd W;  // m x d, rows are hidden weight vectors
  VectorXd v;  // length m

  Eigen::Index width() const { return W.rows(); }
  Eigen::Index input_dim() const { return W.cols(); }
  /// Throws DimensionMismatch unless W has v.size() rows and at least one column.
  void validate() const;
};

/// Unit-norm perturbation of W (v is never perturbed). Rows are the per-unit blocks v_{0,j}.
class KernelDirection {
 public:
  /// Normalizes `blocks`; throws DegenerateInput for a zero direction.
  explicit KernelDirection(MatrixXd blocks);
  static KernelDirection from_vec(const VectorXd& w, Eigen::Index m, Eigen::Index d);

  const MatrixXd& blocks() const { return blocks_; }
  VectorXd vec() const { return vec_rowmajor(blocks_); }
  KernelDirection negated() const { return KernelDirection(-blocks_); }

 private:
  MatrixXd blocks_;
};

/// v_j = 0.5 + j / (m - 1), j = 0..m-1: distinct output weights used by the width experiments.
VectorXd graded_output_weights(Eigen::Index m);

double forward(const ModelParams& theta, const VectorXd& x, double lambda,
               ActivationKind kind = ActivationKind::Tanh);

/// Network outputs for every row of X (N x d).
VectorXd forward_batch(const ModelParams& theta, const MatrixXd& X, double lambda,
                       ActivationKind kind = ActivationKind::Tanh);

/// D^k f for k = 1..4 along a -> f(x; W + a v0); entries beyond k_max are zero.
using DirectionalDerivs = std::array<double, 4>;

DirectionalDerivs directional_derivs(const ModelParams& theta, double lambda,
                                     const KernelDirection& v0, const VectorXd& x, int k_max,
                                     ActivationKind kind = ActivationKind::Tanh);

/// Batched form: column k-1 holds D^k f for every sample.
MatrixXd directional_derivs_batch(const ModelParams& theta, double lambda,
                                  const KernelDirection& v0, const MatrixXd& X, int k_max,
                                  ActivationKind kind = ActivationKind::Tanh);

/// S_m action: unit j of the result is unit perm[j] of the input.
ModelParams permute_units(const ModelParams& theta, const std::vector<int>& perm);

}  // namespace branchlab
