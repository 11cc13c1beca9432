#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "branchlab/continuation.hpp"

namespace branchlab {

/// How the lowest eigenvalue of the tracked branch reaches zero.
///   Interior: lambda_1 changes sign between converged pre-jump points.
///   Fold: lambda_1 decays to zero and the branch terminates (the minimizer jumps).
///   With a refine context the fold is confirmed by continuing the critical curve around it.
///   Boundary: lambda_1(0) is already zero.
///   Unreliable: a jump occurs while lambda_1 is still far from zero.
enum class CrossingKind { None, Interior, Fold, Boundary, Unreliable };

std::string_view to_string(CrossingKind kind);

inline constexpr double kMorseThreshold = -1e-10;

int morse_index(const VectorXd& spectrum, double threshold = kMorseThreshold);

struct RefinedPoint {
  double lambda;
  double lambda1;
  double lambda2;
};

struct CrossingReport {
  CrossingKind kind = CrossingKind::None;
  std::optional<double> lambda_star;
  double bracket_lo = 0.0, bracket_hi = 0.0;
  // Point nearest lambda* at which the reduced analysis is done.
  std::optional<BranchPoint> at_star;
  std::optional<KernelDirection> v0;
  double simplicity_ratio = 0.0;  // |lambda_1 / lambda_2| at at_star
  double speed = 0.0;             // d lambda_1 / d lambda from grid neighbours
  int morse_before = -1;
  int morse_after = -1;
  // Fold only: the critical point that merges with the minimum, found by arclength continuation.
  bool companion_found = false;
  double companion_distance = 0.0;
  double turning_lambda = 0.0;
  // Smallest lambda_1 seen along the continued curve. A suspected fold whose curve never turns
  // is downgraded to None; this is then the closest approach to degeneracy.
  double arc_min_lambda1 = 0.0;
  std::vector<RefinedPoint> refinement;
};

/// Inputs needed to re-solve the branch near lambda*.
struct RefineContext {
  const Dataset* data = nullptr;
  VectorXd v;
  ObjectiveConfig obj;
  ContinuationConfig cfg;
  int bisections = 14;
};

struct CrossingOptions {
  double boundary_tol = 1e-8;
  // A jump counts as a fold when lambda_1 just before it is below this fraction of lambda_1(0)
  // (or of max lambda_1 when lambda_1(0) vanishes).
  double fold_fraction = 0.25;
};

/// Locates lambda* on a traced branch. Without a context only grid information is used.
CrossingReport detect_crossing(const Branch& branch, const RefineContext* ctx = nullptr,
                               const CrossingOptions& opts = {});

/// Eigenvalue curves matched across steps by eigenvector overlap.
struct TrackedCurves {
  MatrixXd values;               // n_points x k, column c follows one eigenvector
  std::vector<bool> fallback;    // per step: overlaps too small, sorted order used
};

struct SpectrumSample {
  VectorXd values;
  MatrixXd vectors;
};

TrackedCurves eig_track(const std::vector<SpectrumSample>& spectra, Eigen::Index k = -1);

}  // namespace branchlab
