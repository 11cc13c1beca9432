#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "branchlab/lbfgs.hpp"
#include "branchlab/objective.hpp"

namespace branchlab {

enum class HessianSource { FiniteDifference, Analytic };

struct ContinuationConfig {
  double dlambda = 1.0 / 400.0;
  double grad_tol = 1e-10;
  int max_iterations = 2000;
  double jump_grad_ratio = 1e3;   // grad-norm spike vs trailing median
  double overlap_floor = 0.5;     // lowest-eigvec overlap with the previous lowest cluster
  double jump_step_ratio = 10.0;  // ||dW|| spike vs trailing median
  int trailing_window = 10;
  double cluster_tol = 1e-6;      // eigenvalues this close to lambda_1 share an eigenspace
  std::uint64_t kick_seed = 0x5eed;
  double kick_scale = 1e-6;
  HessianSource hessian = HessianSource::FiniteDifference;
  int csv_eigs = 6;

  void validate() const;
  /// 0, dlambda, 2 dlambda, ..., 1 (last point snapped to 1).
  std::vector<double> grid() const;
};

struct BranchPoint {
  double lambda = 0.0;
  MatrixXd W;
  double loss = 0.0;
  double grad_norm = 0.0;
  VectorXd spectrum;      // ascending
  VectorXd lowest_eigvec; // unit, row-major vec
  MatrixXd eigvecs;       // all eigenvectors (columns), same order as spectrum
  int iterations = 0;
  bool converged = false;
  bool retried = false;
  bool jump = false;
};

struct JumpEvent {
  std::size_t index;
  double lambda;
  std::string reason;
};

struct Branch {
  std::vector<BranchPoint> points;
  std::vector<JumpEvent> jumps;
  VectorXd v;

  /// Index of the first jump, or points.size() when none.
  std::size_t first_jump() const;
};

/// L-BFGS on W at fixed lambda; v stays fixed. Spectrum fields are left empty.
BranchPoint minimize(const ModelParams& init, double lambda, const Dataset& data, const ObjectiveConfig& obj,
                     const ContinuationConfig& cfg);

/// Fills spectrum, eigvecs and lowest_eigvec of an already minimized point.
void attach_spectrum(BranchPoint& point, const VectorXd& v, const Dataset& data, const ObjectiveConfig& obj,
                     HessianSource source);

MatrixXd branch_hessian(const ModelParams& theta, double lambda, const Dataset& data, const ObjectiveConfig& obj,
                        HessianSource source);

struct NewtonResult {
  MatrixXd W;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Newton iteration on grad = 0 (finds saddles as well as minima).
NewtonResult newton_critical(const ModelParams& init, double lambda, const Dataset& data, const ObjectiveConfig& obj,
                             double tol = 1e-10, int max_iterations = 50);

/// Warm-started branch from W_start (default: the closed-form lambda = 0 minimizer).
Branch trace_branch(const Dataset& data, const VectorXd& v, const ContinuationConfig& cfg, const ObjectiveConfig& obj,
                    const std::vector<double>& lambdas, std::optional<MatrixXd> W_start = std::nullopt);
Branch trace_branch(const Dataset& data, const VectorXd& v, const ContinuationConfig& cfg, const ObjectiveConfig& obj);

/// lambda, loss, grad_norm, converged, jump_flag, eig_1..eig_k
void write_branch_csv(const Branch& branch, const std::filesystem::path& path, int k = 6);

}  // namespace branchlab
