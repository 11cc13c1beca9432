#include "branchlab/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

struct Sample {
  double a, f, dphi;
};

// Minimizer of the cubic through (a, fa, da), (b, fb, db); falls back to bisection.
double cubic_min(const Sample& p, const Sample& q) {
  const double lo = std::min(p.a, q.a), hi = std::max(p.a, q.a);
  const double d1 = p.dphi + q.dphi - 3.0 * (p.f - q.f) / (p.a - q.a);
  const double disc = d1 * d1 - p.dphi * q.dphi;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), q.a - p.a);
    const double t = q.a - (q.a - p.a) * (q.dphi + d2 - d1) / (q.dphi - p.dphi + 2.0 * d2);
    const double margin = 0.1 * (hi - lo);
    if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
  }
  return 0.5 * (lo + hi);
}

class LineSearch {
 public:
  LineSearch(const ValueGrad& fun, const VectorXd& x, const VectorXd& dir, double f0, double dphi0,
             const LbfgsOptions& opts, int& evals)
      : fun_(fun), x_(x), dir_(dir), f0_(f0), dphi0_(dphi0), opts_(opts), evals_(evals) {
    approx_eps_ = 1e-12 * std::abs(f0);
  }

  // Returns true with the accepted point stored in xa/fa/ga.
  bool run(double a_init, VectorXd& xa, double& fa, VectorXd& ga) {
    Sample prev{0.0, f0_, dphi0_};
    double a = a_init;
    for (int i = 0; i < opts_.max_line_search; ++i) {
      Sample cur = eval(a, xa, fa, ga);
      if (accept(cur)) return true;
      if (cur.f > f0_ + opts_.c1 * a * dphi0_ + approx_eps_ || (i > 0 && cur.f >= prev.f && !flat(cur))) {
        return zoom(prev, cur, xa, fa, ga);
      }
      if (cur.dphi >= 0.0) return zoom(cur, prev, xa, fa, ga);
      prev = cur;
      a *= 2.0;
    }
    return false;
  }

 private:
  Sample eval(double a, VectorXd& xa, double& fa, VectorXd& ga) {
    xa = x_ + a * dir_;
    fa = fun_(xa, ga);
    ++evals_;
    if (!std::isfinite(fa) || !ga.allFinite()) {
      throw Error(ErrorCode::Numerical, "non-finite objective during line search");
    }
    return {a, fa, ga.dot(dir_)};
  }

  bool flat(const Sample& s) const { return std::abs(s.f - f0_) <= approx_eps_; }

  bool accept(const Sample& s) const {
    const bool armijo = s.f <= f0_ + opts_.c1 * s.a * dphi0_;
    const bool strong_curv = std::abs(s.dphi) <= -opts_.c2 * dphi0_;
    if (armijo && strong_curv) return true;
    // approximate Wolfe: f at roundoff, slope bracketed
    return flat(s) && s.dphi >= opts_.c2 * dphi0_ && s.dphi <= (2.0 * opts_.c1 - 1.0) * dphi0_;
  }

  bool zoom(Sample lo, Sample hi, VectorXd& xa, double& fa, VectorXd& ga) {
    for (int i = 0; i < opts_.max_line_search; ++i) {
      double a = cubic_min(lo, hi);
      if (std::abs(hi.a - lo.a) <= 1e-16 * std::max(1.0, std::abs(lo.a))) break;
      Sample cur = eval(a, xa, fa, ga);
      if (accept(cur)) return true;
      const bool too_high = cur.f > f0_ + opts_.c1 * a * dphi0_ + approx_eps_ || (cur.f >= lo.f && !flat(cur));
      if (too_high) {
        hi = cur;
      } else {
        if (cur.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
        lo = cur;
      }
    }
    // settle for the best point with decrease
    if (lo.a > 0.0 && lo.f <= f0_ + approx_eps_) {
      eval(lo.a, xa, fa, ga);
      return true;
    }
    return false;
  }

  const ValueGrad& fun_;
  const VectorXd& x_;
  const VectorXd& dir_;
  double f0_, dphi0_;
  const LbfgsOptions& opts_;
  int& evals_;
  double approx_eps_;
};

}  // namespace

LbfgsResult lbfgs_minimize(const ValueGrad& fun, const VectorXd& x0, const LbfgsOptions& opts) {
  LbfgsResult res;
  res.x = x0;
  VectorXd g(x0.size());
  res.f = fun(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !g.allFinite()) throw Error(ErrorCode::Numerical, "non-finite objective at start");
  res.grad_norm = g.norm();

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  VectorXd x_new, g_new;
  double f_new = 0.0;
  int failures = 0;

  while (res.grad_norm > opts.grad_tol) {
    if (res.iterations >= opts.max_iterations) {
      res.message = "iteration cap reached";
      return res;
    }
    // two-loop recursion
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<size_t>(i)] = rho_hist[static_cast<size_t>(i)] * s_hist[static_cast<size_t>(i)].dot(q);
      q -= alpha[static_cast<size_t>(i)] * y_hist[static_cast<size_t>(i)];
    }
    double a_init = 1.0;
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      a_init = std::min(1.0, 1.0 / res.grad_norm);
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    VectorXd dir = -q;
    double dphi0 = g.dot(dir);
    if (!(dphi0 < 0.0)) {
      s_hist.clear(); y_hist.clear(); rho_hist.clear();
      dir = -g;
      dphi0 = -g.squaredNorm();
      a_init = std::min(1.0, 1.0 / res.grad_norm);
    }
    LineSearch ls(fun, res.x, dir, res.f, dphi0, opts, res.evaluations);
    if (!ls.run(a_init, x_new, f_new, g_new)) {
      if (s_hist.empty() || ++failures > 2) {
        res.message = "line search failed";
        return res;
      }
      s_hist.clear(); y_hist.clear(); rho_hist.clear();
      continue;
    }
    VectorXd s = x_new - res.x;
    VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == opts.memory) {
        s_hist.pop_front(); y_hist.pop_front(); rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    res.x.swap(x_new);
    g.swap(g_new);
    res.f = f_new;
    res.grad_norm = g.norm();
    ++res.iterations;
  }
  res.converged = true;
  res.message = "gradient tolerance reached";
  return res;
}

}  // namespace branchlab
