#include "branchlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "branchlab/errors.hpp"
#include "branchlab/reduction.hpp"

namespace branchlab {

std::string_view to_string(CrossingKind kind) {
  switch (kind) {
    case CrossingKind::None: return "none";
    case CrossingKind::Interior: return "interior";
    case CrossingKind::Fold: return "fold";
    case CrossingKind::Boundary: return "boundary";
    case CrossingKind::Unreliable: return "unreliable";
  }
  return "none";
}

int morse_index(const VectorXd& spectrum, double threshold) {
  return static_cast<int>((spectrum.array() < threshold).count());
}

namespace {

BranchPoint solve_at(const RefineContext& ctx, const MatrixXd& W_warm, double lambda) {
  BranchPoint p = minimize({W_warm, ctx.v}, lambda, *ctx.data, ctx.obj, ctx.cfg);
  attach_spectrum(p, ctx.v, *ctx.data, ctx.obj, ctx.cfg.hessian);
  return p;
}

void set_star_point(CrossingReport& rep, const BranchPoint& p) {
  rep.at_star = p;
  rep.v0 = KernelDirection::from_vec(p.lowest_eigvec, p.W.rows(), p.W.cols());
  const double l2 = p.spectrum.size() > 1 ? p.spectrum(1) : 0.0;
  rep.simplicity_ratio = l2 != 0.0 ? std::min(1.0, std::abs(p.spectrum(0) / l2)) : 1.0;
}

void refine_interior(CrossingReport& rep, const Branch& b, std::size_t i, std::size_t k, const RefineContext* ctx) {
  const BranchPoint& lo = b.points[i];
  const BranchPoint& hi = b.points[k];
  double la = lo.lambda, fa = lo.spectrum(0), lb = hi.lambda, fb = hi.spectrum(0);
  double star = la - fa * (lb - la) / (fb - fa);
  const BranchPoint* nearest = &lo;
  for (std::size_t j = i + 1; j <= k; ++j) {
    if (std::abs(b.points[j].spectrum(0)) < std::abs(nearest->spectrum(0))) nearest = &b.points[j];
  }
  BranchPoint best = *nearest;
  if (ctx) {
    // two secant re-solves
    for (int it = 0; it < 2; ++it) {
      BranchPoint p = solve_at(*ctx, lo.W, star);
      rep.refinement.push_back({p.lambda, p.spectrum(0), p.spectrum(1)});
      if (std::abs(p.spectrum(0)) < std::abs(best.spectrum(0))) best = p;
      const double fs = p.spectrum(0);
      if (fs > 0.0) { la = star; fa = fs; } else { lb = star; fb = fs; }
      if (fb == fa) break;
      star = la - fa * (lb - la) / (fb - fa);
    }
  }
  rep.lambda_star = star;
  rep.bracket_lo = la;
  rep.bracket_hi = lb;
  set_star_point(rep, best);
}

enum class ArcOutcome { Turned, NoTurn, Failed };

// Pseudo-arclength continuation of grad = 0 from the last two points on the branch. At a genuine
// fold the curve turns back in lambda and continues as the saddle that annihilates with the
// minimum. If lambda_1 recovers while lambda keeps increasing there was no fold: the branch only
// moved too fast for the grid.
ArcOutcome follow_fold(CrossingReport& rep, const RefineContext& ctx, const BranchPoint& prev,
                       const BranchPoint& cur) {
  const Eigen::Index rows = cur.W.rows(), cols = cur.W.cols(), n = rows * cols;
  auto params = [&](const VectorXd& x) { return ModelParams{unvec_rowmajor(x.head(n), rows, cols), ctx.v}; };
  auto residual = [&](const VectorXd& x) { return vec_rowmajor(grad(params(x), x(n), *ctx.data, ctx.obj)); };
  auto jacobian = [&](const VectorXd& x, const VectorXd& t) {
    MatrixXd J = MatrixXd::Zero(n + 1, n + 1);
    J.topLeftCorner(n, n) = hessian_analytic(params(x), x(n), *ctx.data, ctx.obj);
    const double h = 1e-6;
    VectorXd xp = x, xm = x;
    xp(n) += h;
    xm(n) -= h;
    J.topRightCorner(n, 1) = (residual(xp) - residual(xm)) / (2.0 * h);
    J.bottomRows(1) = t.transpose();
    return J;
  };
  VectorXd x(n + 1), x_prev(n + 1);
  x << vec_rowmajor(cur.W), cur.lambda;
  x_prev << vec_rowmajor(prev.W), prev.lambda;
  if ((x - x_prev).norm() == 0.0) return ArcOutcome::Failed;
  VectorXd t = (x - x_prev).normalized();
  double ds = 1e-3;
  double lam_max = cur.lambda;
  double l1_min = cur.spectrum(0);
  rep.arc_min_lambda1 = l1_min;
  for (int step = 0; step < 400 && ds > 1e-8; ++step) {
    // refresh the tangent from the bordered system, keeping orientation
    VectorXd rhs = VectorXd::Zero(n + 1);
    rhs(n) = 1.0;
    VectorXd tn = jacobian(x, t).partialPivLu().solve(rhs);
    if (!tn.allFinite() || tn.norm() == 0.0) return ArcOutcome::Failed;
    tn.normalize();
    if (tn.dot(t) < 0.0) tn = -tn;
    t = tn;
    const VectorXd pred = x + ds * t;
    VectorXd y = pred;
    bool ok = false;
    int its = 0;
    for (; its < 15; ++its) {
      VectorXd F(n + 1);
      F.head(n) = residual(y);
      F(n) = t.dot(y - pred);
      if (F.head(n).norm() <= 1e-11 && std::abs(F(n)) <= 1e-12) {
        ok = true;
        break;
      }
      const VectorXd dy = jacobian(y, t).partialPivLu().solve(F);
      if (!dy.allFinite()) break;
      y -= dy;
    }
    if (!ok) {
      ds *= 0.5;
      continue;
    }
    if (y(n) < 0.0 || y(n) > 1.0) return ArcOutcome::Failed;
    x = y;
    if (its <= 3) ds = std::min(1.5 * ds, 1e-2);
    const ModelParams sp = params(x);
    const VectorXd spec = symmetric_eigen(branch_hessian(sp, x(n), *ctx.data, ctx.obj, ctx.cfg.hessian)).values;
    if (x(n) > lam_max) {
      lam_max = x(n);
      if (spec(0) > 0.0) l1_min = std::min(l1_min, spec(0));
      rep.arc_min_lambda1 = l1_min;
      if (l1_min > 0.0 && spec(0) >= 4.0 * l1_min) return ArcOutcome::NoTurn;
    }
    // well past the turning point: classify the companion
    if (lam_max - x(n) >= std::max(1e-4, lam_max - cur.lambda)) {
      const BranchPoint m = solve_at(ctx, cur.W, x(n));
      rep.companion_found = true;
      rep.companion_distance = (sp.W - m.W).norm();
      rep.morse_after = morse_index(spec);
      rep.turning_lambda = lam_max;
      return ArcOutcome::Turned;
    }
  }
  return ArcOutcome::Failed;
}

void refine_fold(CrossingReport& rep, const Branch& b, std::size_t jump, const RefineContext* ctx) {
  const BranchPoint& last = b.points[jump - 1];
  rep.bracket_lo = last.lambda;
  rep.bracket_hi = b.points[jump].lambda;
  rep.lambda_star = last.lambda;
  BranchPoint best = last;
  BranchPoint prev_on_branch = b.points[jump >= 2 ? jump - 2 : 0];
  if (ctx) {
    const double jump_size = (b.points[jump].W - last.W).norm();
    BranchPoint lo = last;
    std::vector<BranchPoint> on_branch{last};
    double hi = rep.bracket_hi;
    for (int it = 0; it < ctx->bisections; ++it) {
      const double mid = 0.5 * (lo.lambda + hi);
      BranchPoint p = solve_at(*ctx, lo.W, mid);
      const bool continuous = p.converged && (p.W - lo.W).norm() <= 0.25 * jump_size &&
                              p.spectrum(0) > 0.0 && p.spectrum(0) <= lo.spectrum(0) * (1.0 + 1e-6);
      rep.refinement.push_back({mid, p.spectrum(0), p.spectrum(1)});
      if (continuous) {
        lo = p;
        on_branch.push_back(p);
      } else {
        hi = mid;
      }
    }
    rep.bracket_lo = lo.lambda;
    rep.bracket_hi = hi;
    best = lo;
    // lambda_1^2 is linear in lambda near a fold; extrapolate it to zero.
    double star = lo.lambda;
    if (on_branch.size() >= 2) {
      const BranchPoint& a = on_branch[on_branch.size() - 2];
      const BranchPoint& c = on_branch.back();
      const double qa = a.spectrum(0) * a.spectrum(0), qc = c.spectrum(0) * c.spectrum(0);
      if (qa > qc) star = c.lambda + qc * (c.lambda - a.lambda) / (qa - qc);
    }
    rep.lambda_star = std::clamp(star, lo.lambda, hi);
    if (on_branch.size() >= 2) prev_on_branch = on_branch[on_branch.size() - 2];
  }
  set_star_point(rep, best);
  if (ctx && follow_fold(rep, *ctx, prev_on_branch, best) == ArcOutcome::NoTurn) {
    rep.kind = CrossingKind::None;
    rep.lambda_star.reset();
    rep.morse_after = rep.morse_before;
  }
}

}  // namespace

CrossingReport detect_crossing(const Branch& branch, const RefineContext* ctx, const CrossingOptions& opts) {
  CrossingReport rep;
  const auto& pts = branch.points;
  if (pts.empty()) throw Error(ErrorCode::InvalidInput, "empty branch");
  for (const BranchPoint& p : pts) {
    if (p.spectrum.size() == 0) throw Error(ErrorCode::InvalidInput, "branch point without spectrum");
  }
  if (ctx && !ctx->data) throw Error(ErrorCode::InvalidInput, "refine context without data");
  const std::size_t jump = branch.first_jump();
  const double l0 = pts.front().spectrum(0);

  if (std::abs(l0) <= opts.boundary_tol) {
    rep.kind = CrossingKind::Boundary;
    rep.lambda_star = pts.front().lambda;
    rep.morse_before = morse_index(pts.front().spectrum);
    rep.morse_after = pts.size() > 1 ? morse_index(pts[1].spectrum) : rep.morse_before;
    if (pts.size() > 1) rep.speed = (pts[1].spectrum(0) - l0) / (pts[1].lambda - pts[0].lambda);
    set_star_point(rep, pts.front());
    return rep;
  }
  if (jump < 3 && jump < pts.size()) {
    rep.kind = CrossingKind::Unreliable;
    return rep;
  }
  // sign change among pre-jump converged points
  for (std::size_t i = 0; i + 1 < jump; ++i) {
    if (!pts[i].converged || !(pts[i].spectrum(0) > 0.0)) continue;
    // step over points sitting on zero
    std::size_t k = i + 1;
    while (k < jump && pts[k].converged && std::abs(pts[k].spectrum(0)) <= -kMorseThreshold) ++k;
    if (k < jump && pts[k].converged && pts[k].spectrum(0) < kMorseThreshold) {
      rep.kind = CrossingKind::Interior;
      rep.morse_before = morse_index(pts[i].spectrum);
      rep.morse_after = morse_index(pts[k].spectrum);
      const std::size_t lo = i > 0 ? i - 1 : i;
      const std::size_t hi = std::min(k + 1, jump - 1);
      rep.speed = (pts[hi].spectrum(0) - pts[lo].spectrum(0)) / (pts[hi].lambda - pts[lo].lambda);
      refine_interior(rep, branch, i, k, ctx);
      return rep;
    }
  }
  if (jump < pts.size()) {
    double scale = l0;
    for (std::size_t i = 0; i < jump; ++i) scale = std::max(scale, pts[i].spectrum(0));
    const BranchPoint& last = pts[jump - 1];
    rep.morse_before = morse_index(last.spectrum);
    rep.speed = (last.spectrum(0) - pts[jump - 2].spectrum(0)) / (last.lambda - pts[jump - 2].lambda);
    if (last.spectrum(0) <= opts.fold_fraction * scale && rep.speed < 0.0) {
      rep.kind = CrossingKind::Fold;
      refine_fold(rep, branch, jump, ctx);
    } else {
      rep.kind = CrossingKind::Unreliable;
      rep.bracket_lo = last.lambda;
      rep.bracket_hi = pts[jump].lambda;
    }
    return rep;
  }
  rep.kind = CrossingKind::None;
  rep.morse_before = rep.morse_after = morse_index(pts.back().spectrum);
  return rep;
}

TrackedCurves eig_track(const std::vector<SpectrumSample>& spectra, Eigen::Index k) {
  TrackedCurves out;
  if (spectra.empty()) return out;
  const Eigen::Index n = spectra.front().values.size();
  if (k < 0 || k > n) k = n;
  for (const auto& s : spectra) {
    if (s.values.size() != n || s.vectors.rows() != n || s.vectors.cols() != n) {
      throw Error(ErrorCode::DimensionMismatch, "spectra along the branch differ in size");
    }
  }
  out.values.resize(static_cast<Eigen::Index>(spectra.size()), k);
  out.fallback.assign(spectra.size(), false);
  // perm[c] = index of curve c in the current sorted spectrum
  std::vector<Eigen::Index> perm(static_cast<size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) perm[static_cast<size_t>(c)] = c;
  for (Eigen::Index c = 0; c < k; ++c) out.values(0, c) = spectra[0].values(c);

  for (std::size_t s = 1; s < spectra.size(); ++s) {
    const MatrixXd overlap = (spectra[s - 1].vectors.transpose() * spectra[s].vectors).cwiseAbs();
    std::vector<Eigen::Index> prev_to_cur(static_cast<size_t>(n), -1);
    std::vector<bool> row_used(static_cast<size_t>(n), false), col_used(static_cast<size_t>(n), false);
    double weakest = 1.0;
    for (Eigen::Index step = 0; step < n; ++step) {
      double best = -1.0;
      Eigen::Index br = 0, bc = 0;
      for (Eigen::Index r = 0; r < n; ++r) {
        if (row_used[static_cast<size_t>(r)]) continue;
        for (Eigen::Index c = 0; c < n; ++c) {
          if (!col_used[static_cast<size_t>(c)] && overlap(r, c) > best) {
            best = overlap(r, c);
            br = r;
            bc = c;
          }
        }
      }
      row_used[static_cast<size_t>(br)] = col_used[static_cast<size_t>(bc)] = true;
      prev_to_cur[static_cast<size_t>(br)] = bc;
      weakest = std::min(weakest, best);
    }
    if (weakest < 0.5) {
      out.fallback[s] = true;
      for (Eigen::Index c = 0; c < n; ++c) perm[static_cast<size_t>(c)] = c;
    } else {
      for (auto& idx : perm) idx = prev_to_cur[static_cast<size_t>(idx)];
    }
    for (Eigen::Index c = 0; c < k; ++c) out.values(static_cast<Eigen::Index>(s), c) = spectra[s].values(perm[static_cast<size_t>(c)]);
  }
  return out;
}

}  // namespace branchlab
