#include "branchlab/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "branchlab/errors.hpp"
#include "branchlab/spectral.hpp"

namespace branchlab {

VectorXd symmetric_grid(double a_max, Eigen::Index n) {
  if (n < 3 || n % 2 == 0) throw Error(ErrorCode::InvalidInput, "grid needs an odd count >= 3");
  if (!(a_max > 0.0)) throw Error(ErrorCode::InvalidInput, "a_max must be positive");
  VectorXd a(n);
  const Eigen::Index half = n / 2;
  for (Eigen::Index k = 0; k < n; ++k) a(k) = a_max * static_cast<double>(k - half) / static_cast<double>(half);
  return a;
}

ReducedSamples reduced_potential(const MatrixXd& W, const KernelDirection& v0, double lambda, const Dataset& data,
                                 const ObjectiveConfig& obj, const VectorXd& v, const VectorXd& a_grid) {
  const double base = loss({W, v}, lambda, data, obj);
  ReducedSamples out{a_grid, VectorXd(a_grid.size())};
  for (Eigen::Index k = 0; k < a_grid.size(); ++k) {
    out.phi(k) = a_grid(k) == 0.0 ? 0.0 : loss({W + a_grid(k) * v0.blocks(), v}, lambda, data, obj) - base;
  }
  return out;
}

PolyFit fit_poly(const VectorXd& a, const VectorXd& phi) {
  if (a.size() != phi.size()) throw Error(ErrorCode::DimensionMismatch, "a and phi differ in length");
  if (a.size() < 9) throw Error(ErrorCode::Fit, "polynomial fit needs at least 9 points");
  MatrixXd design(a.size(), 3);
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double a2 = a(k) * a(k);
    design(k, 0) = a2;
    design(k, 1) = a2 * a(k);
    design(k, 2) = a2 * a2;
  }
  const VectorXd c = least_squares(design, phi);
  PolyFit fit;
  fit.c2 = c(0);
  fit.c3 = c(1);
  fit.c4 = c(2);
  fit.residual_rms = std::sqrt((design * c - phi).squaredNorm() / static_cast<double>(a.size()));
  fit.max_abs_phi = phi.cwiseAbs().maxCoeff();
  return fit;
}

BifCoeffs bif_coeffs_analytic(const MatrixXd& W, double lambda, const KernelDirection& v0, const Dataset& data,
                              const ObjectiveConfig& obj, const VectorXd& v) {
  BifCoeffs out;
  out.terms = directional_loss_derivs({W, v}, lambda, v0, data, obj);
  out.d1 = out.terms.d[0];
  out.g_a = out.terms.d[1];
  out.g_aa = out.terms.d[2];
  out.g_aaa = out.terms.d[3];
  return out;
}

FdCoeffs bif_coeffs_fd(const MatrixXd& W, double lambda, const KernelDirection& v0, const Dataset& data,
                       const ObjectiveConfig& obj, const VectorXd& v, double h) {
  auto L = [&](double a) { return loss({W + a * v0.blocks(), v}, lambda, data, obj); };
  const double f0 = L(0.0), f1 = L(h), fm1 = L(-h), f2 = L(2 * h), fm2 = L(-2 * h);
  const double f3 = L(3 * h), fm3 = L(-3 * h);
  FdCoeffs out;
  // fourth-order accurate stencils
  out.d3 = (-f3 + 8 * f2 - 13 * f1 + 13 * fm1 - 8 * fm2 + fm3) / (8 * h * h * h);
  out.d4 = (-f3 + 12 * f2 - 39 * f1 + 56 * f0 - 39 * fm1 + 12 * fm2 - fm3) / (6 * h * h * h * h);
  return out;
}

Transversality transversality(const Branch& branch, const CrossingReport& crossing, const RefineContext* ctx,
                              double a_max) {
  if (!crossing.lambda_star) throw Error(ErrorCode::Estimation, "no crossing to estimate transversality at");
  const double star = *crossing.lambda_star;
  const std::size_t jump = branch.first_jump();
  const auto& pts = branch.points;
  if (jump < 3) throw Error(ErrorCode::Estimation, "too few pre-jump points");

  Transversality out;
  // nearest pre-jump grid point to lambda*
  std::size_t c = 0;
  for (std::size_t i = 0; i < jump; ++i) {
    if (std::abs(pts[i].lambda - star) < std::abs(pts[c].lambda - star)) c = i;
  }
  if (c > 0 && c + 1 < jump) {
    out.from_eigenvalue = (pts[c + 1].spectrum(0) - pts[c - 1].spectrum(0)) / (pts[c + 1].lambda - pts[c - 1].lambda);
  } else {
    const std::size_t hi = std::min(c, jump - 1), lo = hi - 1;
    out.from_eigenvalue = (pts[hi].spectrum(0) - pts[lo].spectrum(0)) / (pts[hi].lambda - pts[lo].lambda);
    out.one_sided = true;
  }
  if (!ctx || !crossing.v0) return out;

  // c2 along the fixed kernel direction at up to five pre-jump points around lambda*
  std::vector<std::size_t> idx;
  const std::size_t first = c >= 2 ? c - 2 : 0;
  for (std::size_t i = first; i < jump && idx.size() < 5; ++i) idx.push_back(i);
  if (idx.size() < 3) throw Error(ErrorCode::Estimation, "insufficient points for the c2 slope");
  out.one_sided = out.one_sided || idx.back() < c + 2;
  const VectorXd grid = symmetric_grid(a_max, 41);
  MatrixXd design(static_cast<Eigen::Index>(idx.size()), 2);
  VectorXd c2(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const BranchPoint& p = pts[idx[k]];
    const ReducedSamples s = reduced_potential(p.W, *crossing.v0, p.lambda, *ctx->data, ctx->obj, ctx->v, grid);
    design(static_cast<Eigen::Index>(k), 0) = 1.0;
    design(static_cast<Eigen::Index>(k), 1) = p.lambda - star;
    c2(static_cast<Eigen::Index>(k)) = fit_poly(s.a, s.phi).c2;
  }
  out.from_fit = 2.0 * least_squares(design, c2)(1);
  out.points_used = static_cast<int>(idx.size());
  return out;
}

std::string_view to_string(NormalFormClass cls) {
  switch (cls) {
    case NormalFormClass::Transcritical: return "transcritical";
    case NormalFormClass::Pitchfork: return "pitchfork";
    case NormalFormClass::SaddleNode: return "saddle-node";
    case NormalFormClass::Degenerate: return "degenerate";
  }
  return "degenerate";
}

double NormalForm::transcritical_slope() const {
  if (cls != NormalFormClass::Transcritical) return std::numeric_limits<double>::quiet_NaN();
  return -2.0 * g_amu / g_aa;
}

std::optional<double> NormalForm::pitchfork_amplitude(double mu) const {
  if (cls != NormalFormClass::Pitchfork) return std::nullopt;
  const double radicand = -g_amu * mu / (g_aaa / 6.0);
  if (!(radicand > 0.0)) return std::nullopt;
  return std::sqrt(radicand);
}

std::optional<double> NormalForm::saddle_node_separation(double mu) const {
  if (cls != NormalFormClass::SaddleNode) return std::nullopt;
  const double radicand = -2.0 * g_mu * mu / g_aa;
  if (!(radicand > 0.0)) return std::nullopt;
  return 2.0 * std::sqrt(radicand);
}

double unfolding_slope(const MatrixXd& W, double lambda, const KernelDirection& v0, const Dataset& data,
                       const ObjectiveConfig& obj, const VectorXd& v, double h) {
  check_lambda(lambda);
  const double lo = std::max(0.0, lambda - h), hi = std::min(1.0, lambda + h);
  auto d1 = [&](double l) { return (grad({W, v}, l, data, obj).array() * v0.blocks().array()).sum(); };
  return (d1(hi) - d1(lo)) / (hi - lo);
}

NormalForm classify_normal_form(double g_amu, double g_aa, double g_aaa, double g_mu, const NormalFormOptions& opts) {
  NormalForm nf;
  nf.g_amu = g_amu;
  nf.g_aa = g_aa;
  nf.g_aaa = g_aaa;
  nf.g_mu = g_mu;
  nf.mu_window = g_amu != 0.0 ? 2.0 * std::abs(g_aa * g_mu) / (g_amu * g_amu) : std::numeric_limits<double>::infinity();
  if (std::abs(g_mu) > opts.zero_tol && std::abs(g_aa) > opts.zero_tol && nf.mu_window >= opts.mu_resolution) {
    nf.cls = NormalFormClass::SaddleNode;
    const double denom = std::sqrt(std::abs(g_amu)) * std::sqrt(std::abs(g_aaa));
    nf.ratio = denom > 0.0 ? std::abs(g_aa) / denom : std::numeric_limits<double>::infinity();
    return nf;
  }
  const bool no_transversality = std::abs(g_amu) <= opts.zero_tol;
  const bool no_nonlinearity = std::abs(g_aa) <= opts.zero_tol && std::abs(g_aaa) <= opts.zero_tol;
  if (no_transversality || no_nonlinearity) {
    nf.cls = NormalFormClass::Degenerate;
    nf.ratio = std::numeric_limits<double>::quiet_NaN();
    return nf;
  }
  const double denom = std::sqrt(std::abs(g_amu)) * std::sqrt(std::abs(g_aaa));
  nf.ratio = denom > 0.0 ? std::abs(g_aa) / denom : std::numeric_limits<double>::infinity();
  if (nf.ratio > opts.tau) nf.cls = NormalFormClass::Transcritical;
  else nf.cls = std::abs(g_aaa) > opts.zero_tol ? NormalFormClass::Pitchfork : NormalFormClass::Degenerate;
  return nf;
}

SlaveSolution ls_slave_solve(const Dataset& toy, const ObjectiveConfig& obj, double wbar, double lambda0, double a,
                             double mu) {
  if (toy.dim() != 1) throw Error(ErrorCode::InvalidInput, "slave solve is defined for the one-input toy model");
  const double lambda = lambda0 + mu;
  check_lambda(lambda);
  const double s = std::numbers::sqrt2 / 2.0;
  const VectorXd v = VectorXd::Ones(2);
  auto point = [&](double w) {
    MatrixXd W(2, 1);
    W << wbar + s * (a + w), wbar + s * (w - a);
    return W;
  };
  const VectorXd kernel = (VectorXd(2) << s, -s).finished();
  const VectorXd range = (VectorXd(2) << s, s).finished();

  SlaveSolution out;
  double w = 0.0;
  for (int it = 0; it < 60; ++it) {
    const MatrixXd W = point(w);
    const MatrixXd G = grad({W, v}, lambda, toy, obj);
    const double F = range.dot(G.col(0));
    out.iterations = it;
    if (std::abs(F) <= 1e-14) break;
    const MatrixXd H = hessian_analytic({W, v}, lambda, toy, obj);
    const double Hrr = range.dot(H * range);
    if (!(std::abs(Hrr) > 0.0) || !std::isfinite(F)) throw Error(ErrorCode::SlaveSolve, "singular range equation");
    const double step = F / Hrr;
    w -= step;
    if (!std::isfinite(w) || std::abs(w) > 1e3) throw Error(ErrorCode::SlaveSolve, "slave Newton diverged");
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(w))) break;
    if (it == 59) throw Error(ErrorCode::SlaveSolve, "slave Newton did not converge");
  }
  out.w = w;
  out.W = point(w);
  out.g = kernel.dot(grad({out.W, v}, lambda, toy, obj).col(0));
  // reference: the slave solution at a = 0 for the same mu
  double w0 = 0.0;
  if (a != 0.0) w0 = ls_slave_solve(toy, obj, wbar, lambda0, 0.0, mu).w;
  MatrixXd W0(2, 1);
  W0 << wbar + s * w0, wbar + s * w0;
  out.phi = loss({out.W, v}, lambda, toy, obj) - loss({W0, v}, lambda, toy, obj);
  return out;
}

}  // namespace branchlab
