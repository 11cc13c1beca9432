#pragma once

#include <optional>
#include <string_view>

#include "branchlab/continuation.hpp"

namespace branchlab {

struct CrossingReport;
struct RefineContext;

/// n points evenly spaced over [-a_max, a_max]; the middle one is exactly 0.
VectorXd symmetric_grid(double a_max, Eigen::Index n = 41);

struct ReducedSamples {
  VectorXd a;
  VectorXd phi;  // loss(W + a v0) - loss(W)
};

ReducedSamples reduced_potential(const MatrixXd& W, const KernelDirection& v0, double lambda, const Dataset& data,
                                 const ObjectiveConfig& obj, const VectorXd& v, const VectorXd& a_grid);

/// phi ~ c2 a^2 + c3 a^3 + c4 a^4 (no constant or linear term).
struct PolyFit {
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;
  double residual_rms = 0.0;
  double max_abs_phi = 0.0;
};

PolyFit fit_poly(const VectorXd& a, const VectorXd& phi);

/// g_aa = D^3 L and g_aaa = D^4 L along v0, with their expectation terms.
struct BifCoeffs {
  double g_a = 0.0;  // D^2 L, the Hessian quadratic form along v0
  double g_aa = 0.0;
  double g_aaa = 0.0;
  double d1 = 0.0;   // stationarity residual D^1 L
  DirectionalLossDerivs terms;

  /// Share of 3 E[(D^2 f)^2] in g_aaa.
  double curvature_share() const { return g_aaa != 0.0 ? terms.d4_curvature_sq / g_aaa : 0.0; }
};

BifCoeffs bif_coeffs_analytic(const MatrixXd& W, double lambda, const KernelDirection& v0, const Dataset& data,
                              const ObjectiveConfig& obj, const VectorXd& v);

/// Third and fourth central differences of a -> loss(W + a v0), step h.
struct FdCoeffs {
  double d3 = 0.0, d4 = 0.0;
};

FdCoeffs bif_coeffs_fd(const MatrixXd& W, double lambda, const KernelDirection& v0, const Dataset& data,
                       const ObjectiveConfig& obj, const VectorXd& v, double h = 1e-2);

struct Transversality {
  double from_eigenvalue = 0.0;     // d lambda_1 / d lambda near lambda* (canonical)
  std::optional<double> from_fit;   // 2 d c2 / d mu along fixed v0
  int points_used = 0;
  bool one_sided = false;
};

/// Estimates g_a_mu. The fitted route needs a refine context (data and v).
Transversality transversality(const Branch& branch, const CrossingReport& crossing, const RefineContext* ctx = nullptr,
                              double a_max = 0.3);

/// v0 . d/dlambda grad L at fixed W (central difference in lambda). Vanishes at a crossing on
/// a branch that persists through lambda*, and not at a fold.
double unfolding_slope(const MatrixXd& W, double lambda, const KernelDirection& v0, const Dataset& data,
                       const ObjectiveConfig& obj, const VectorXd& v, double h = 1e-6);

enum class NormalFormClass { Transcritical, Pitchfork, SaddleNode, Degenerate };

std::string_view to_string(NormalFormClass cls);

struct NormalFormOptions {
  double tau = 0.1;
  double zero_tol = 1e-12;
  // A saddle-node is reported when its mu window 2 |g_aa g_mu| / g_amu^2 reaches this width.
  double mu_resolution = 1.0 / 400.0;
};

struct NormalForm {
  NormalFormClass cls = NormalFormClass::Degenerate;
  double ratio = 0.0;  // |g_aa| / (|g_amu|^(1/2) |g_aaa|^(1/2))
  double g_amu = 0.0, g_aa = 0.0, g_aaa = 0.0, g_mu = 0.0;
  double mu_window = 0.0;  // 2 |g_aa g_mu| / g_amu^2

  /// Transcritical: nontrivial branch a(mu) = -2 g_amu mu / g_aa.
  double transcritical_slope() const;
  /// Pitchfork: beta = g_aaa / 6 > 0.
  bool supercritical() const { return g_aaa > 0.0; }
  /// Pitchfork: positive root of a^2 = -g_amu mu / (g_aaa / 6) when the radicand is positive.
  std::optional<double> pitchfork_amplitude(double mu) const;
  /// Saddle-node: distance 2 sqrt(-2 g_mu mu / g_aa) between the two critical points, on the side
  /// where they exist.
  std::optional<double> saddle_node_separation(double mu) const;
};

NormalForm classify_normal_form(double g_amu, double g_aa, double g_aaa, double g_mu = 0.0,
                                const NormalFormOptions& opts = {});

/// Lyapunov-Schmidt on the two-unit, one-input model with v = (1, 1): kernel coordinate a along
/// (1,-1)/sqrt2 and range coordinate w along (1,1)/sqrt2 around the diagonal point (wbar, wbar).
struct SlaveSolution {
  double w = 0.0;           // range coordinate solving the range equation
  MatrixXd W;               // full 2x1 parameter
  double g = 0.0;           // kernel component of the gradient
  double phi = 0.0;         // loss(W) - loss(branch point at lambda0 + mu)
  int iterations = 0;
};

SlaveSolution ls_slave_solve(const Dataset& toy, const ObjectiveConfig& obj, double wbar, double lambda0, double a,
                             double mu);

}  // namespace branchlab
