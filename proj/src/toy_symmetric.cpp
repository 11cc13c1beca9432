#include "branchlab/toy_symmetric.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>

#include "branchlab/continuation.hpp"
#include "branchlab/errors.hpp"
#include "branchlab/reduction.hpp"

namespace branchlab {

namespace {

const Eigen::Vector2d kLongitudinal(std::sqrt(0.5), std::sqrt(0.5));

}  // namespace

ObjectiveConfig ToyLandscape::objective() const {
  ObjectiveConfig cfg;
  cfg.alpha = alpha;
  return cfg;
}

MatrixXd ToyLandscape::point(double w1, double w2) {
  MatrixXd W(2, 1);
  W << w1, w2;
  return W;
}

double ToyLandscape::loss(double w1, double w2, double lambda) const {
  return branchlab::loss({point(w1, w2), v()}, lambda, data, objective());
}

Eigen::Vector2d ToyLandscape::grad(double w1, double w2, double lambda) const {
  const MatrixXd G = branchlab::grad({point(w1, w2), v()}, lambda, data, objective());
  return {G(0, 0), G(1, 0)};
}

Eigen::Matrix2d ToyLandscape::hessian(double w1, double w2, double lambda) const {
  return hessian_analytic({point(w1, w2), v()}, lambda, data, objective());
}

DiagonalPoint diagonal_point(const ToyLandscape& toy, double lambda, double lo, double hi) {
  if (toy.data.dim() != 1) throw Error(ErrorCode::InvalidInput, "toy landscape needs d = 1");
  check_lambda(lambda);
  auto f = [&](double w) { return toy.loss(w, w, lambda); };
  const auto [w_min, f_min] = boost::math::tools::brent_find_minima(f, lo, hi, std::numeric_limits<double>::digits);
  (void)f_min;
  const double margin = 1e-6 * (hi - lo);
  if (!(w_min > lo + margin && w_min < hi - margin)) {
    throw Error(ErrorCode::Bracketing, "diagonal minimizer sits on the search bound");
  }
  // Newton polish on the symmetric derivative d/dw loss(w, w) = g1 + g2
  double w = w_min;
  double dg = 0.0;
  for (int it = 0; it < 20; ++it) {
    const Eigen::Vector2d g = toy.grad(w, w, lambda);
    dg = g.sum();
    const Eigen::Matrix2d H = toy.hessian(w, w, lambda);
    const double curv = H.sum();
    if (!(curv > 0.0)) break;
    const double step = dg / curv;
    w -= step;
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(w))) break;
  }
  DiagonalPoint p;
  p.lambda = lambda;
  p.wbar = w;
  p.loss = toy.loss(w, w, lambda);
  p.diag_grad = toy.grad(w, w, lambda).sum();
  const Eigen::Matrix2d H = toy.hessian(w, w, lambda);
  const SymmetricEigen eig = symmetric_eigen(H);
  const double align0 = std::abs(eig.vectors.col(0).dot(kLongitudinal));
  const double align1 = std::abs(eig.vectors.col(1).dot(kLongitudinal));
  if (align0 >= align1) {
    p.longitudinal = eig.values(0);
    p.transverse = eig.values(1);
  } else {
    p.longitudinal = eig.values(1);
    p.transverse = eig.values(0);
  }
  return p;
}

std::vector<DiagonalPoint> diagonal_branch(const ToyLandscape& toy, const std::vector<double>& lambdas, double lo,
                                           double hi) {
  std::vector<DiagonalPoint> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) out.push_back(diagonal_point(toy, lambda, lo, hi));
  return out;
}

VectorXd antidiagonal_potential(const ToyLandscape& toy, double lambda, double wbar, const VectorXd& s_grid) {
  const double base = toy.loss(wbar, wbar, lambda);
  VectorXd phi(s_grid.size());
  for (Eigen::Index k = 0; k < s_grid.size(); ++k) {
    phi(k) = s_grid(k) == 0.0 ? 0.0 : toy.loss(wbar + s_grid(k), wbar - s_grid(k), lambda) - base;
  }
  return phi;
}

SublevelGrid::SublevelGrid(const ToyLandscape& toy, double lambda, const GridSpec& spec)
    : toy_(toy), lambda_(lambda), spec_(spec) {
  if (spec.n < 3 || !(spec.half_width > 0.0)) throw Error(ErrorCode::InvalidInput, "bad grid spec");
  check_lambda(lambda);
  const int n = spec.n;
  values_.resize(n, n);
  grad_sq_.resize(n, n);
  // Direct two-unit kernel; plain summation is enough for contouring.
  const VectorXd& x = toy.data.X.col(0);
  const VectorXd& y = toy.data.y;
  const Eigen::Index N = x.size();
  const double inv_n = 1.0 / static_cast<double>(N);
  std::vector<double> h1(static_cast<size_t>(N)), d1(static_cast<size_t>(N));
  for (int c = 0; c < n; ++c) {
    const double w1 = coordinate(c) + spec.c1 - spec.c2;  // coordinate() is centred on c2
    for (Eigen::Index s = 0; s < N; ++s) {
      const double z = w1 * x(s), t = std::tanh(z);
      h1[static_cast<size_t>(s)] = (1.0 - lambda) * z + lambda * t;
      d1[static_cast<size_t>(s)] = ((1.0 - lambda) + lambda * (1.0 - t * t)) * x(s);
    }
    for (int r = 0; r < n; ++r) {
      const double w2 = coordinate(r);
      double l = 0.0, g1 = 0.0, g2 = 0.0;
      for (Eigen::Index s = 0; s < N; ++s) {
        const double z = w2 * x(s), t = std::tanh(z);
        const double res = h1[static_cast<size_t>(s)] + (1.0 - lambda) * z + lambda * t - y(s);
        l += res * res;
        g1 += res * d1[static_cast<size_t>(s)];
        g2 += res * ((1.0 - lambda) + lambda * (1.0 - t * t)) * x(s);
      }
      values_(r, c) = 0.5 * l * inv_n + 0.5 * toy.alpha * (w1 * w1 + w2 * w2);
      g1 = g1 * inv_n + toy.alpha * w1;
      g2 = g2 * inv_n + toy.alpha * w2;
      grad_sq_(r, c) = g1 * g1 + g2 * g2;
    }
  }
}

double SublevelGrid::coordinate(int k) const {
  return spec_.c2 - spec_.half_width + 2.0 * spec_.half_width * k / (spec_.n - 1);
}

SublevelGrid::Components SublevelGrid::components(double level) const {
  const int n = spec_.n;
  std::vector<int> label(static_cast<size_t>(n) * static_cast<size_t>(n), -1);
  Components out;
  std::deque<std::pair<int, int>> queue;
  for (int r0 = 0; r0 < n; ++r0) {
    for (int c0 = 0; c0 < n; ++c0) {
      if (values_(r0, c0) > level || label[static_cast<size_t>(r0 * n + c0)] >= 0) continue;
      const int id = out.count++;
      label[static_cast<size_t>(r0 * n + c0)] = id;
      queue.emplace_back(r0, c0);
      while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        if (r == 0 || c == 0 || r == n - 1 || c == n - 1) out.touches_boundary = true;
        const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& q : nbr) {
          if (q[0] < 0 || q[1] < 0 || q[0] >= n || q[1] >= n) continue;
          auto& lab = label[static_cast<size_t>(q[0] * n + q[1])];
          if (lab < 0 && values_(q[0], q[1]) <= level) {
            lab = id;
            queue.emplace_back(q[0], q[1]);
          }
        }
      }
    }
  }
  return out;
}

std::vector<CriticalPoint> SublevelGrid::census() const {
  const int n = spec_.n;
  const double shift = spec_.c1 - spec_.c2;
  std::vector<CriticalPoint> found;
  for (int r = 1; r < n - 1; ++r) {
    for (int c = 1; c < n - 1; ++c) {
      const double g = grad_sq_(r, c);
      bool local_min = true;
      for (int dr = -1; dr <= 1 && local_min; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr || dc) && grad_sq_(r + dr, c + dc) <= g) {
            local_min = false;
            break;
          }
        }
      }
      if (!local_min) continue;
      Eigen::Vector2d w(coordinate(c) + shift, coordinate(r));
      bool ok = false;
      for (int it = 0; it < 40; ++it) {
        const Eigen::Vector2d G = toy_.grad(w(0), w(1), lambda_);
        if (G.norm() <= 1e-10) {
          ok = true;
          break;
        }
        const Eigen::Matrix2d H = toy_.hessian(w(0), w(1), lambda_);
        const Eigen::Vector2d step = H.fullPivLu().solve(G);
        if (!step.allFinite()) break;
        w -= step;
      }
      const double lo1 = spec_.c1 - spec_.half_width, hi1 = spec_.c1 + spec_.half_width;
      const double lo2 = spec_.c2 - spec_.half_width, hi2 = spec_.c2 + spec_.half_width;
      if (!ok || w(0) < lo1 || w(0) > hi1 || w(1) < lo2 || w(1) > hi2) continue;
      bool duplicate = false;
      for (const auto& p : found) {
        if (std::hypot(p.w1 - w(0), p.w2 - w(1)) < 1e-6) duplicate = true;
      }
      if (duplicate) continue;
      const Eigen::Vector2d ev = symmetric_eigen(toy_.hessian(w(0), w(1), lambda_)).values;
      CriticalPoint cp{w(0), w(1), toy_.loss(w(0), w(1), lambda_), ev, CriticalPoint::Kind::Degenerate};
      const double tol = 1e-10;
      if (ev(0) > tol) cp.kind = CriticalPoint::Kind::Minimum;
      else if (ev(1) < -tol) cp.kind = CriticalPoint::Kind::Maximum;
      else if (ev(0) < -tol && ev(1) > tol) cp.kind = CriticalPoint::Kind::Saddle;
      found.push_back(cp);
    }
  }
  std::sort(found.begin(), found.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    return a.w1 != b.w1 ? a.w1 < b.w1 : a.w2 < b.w2;
  });
  return found;
}

void SublevelGrid::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char buf[32];
  for (int r = 0; r < spec_.n; ++r) {
    for (int c = 0; c < spec_.n; ++c) {
      std::snprintf(buf, sizeof buf, "%.10g", values_(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

OffDiagonalMinima off_diagonal_minima(const ToyLandscape& toy, double lambda, double wbar) {
  OffDiagonalMinima out;
  const VectorXd s_grid = symmetric_grid(3.0, 301);
  const VectorXd phi = antidiagonal_potential(toy, lambda, wbar, s_grid);
  Eigen::Index k;
  const double depth = phi.minCoeff(&k);
  const double floor = 1e-12 * std::max(1.0, toy.loss(wbar, wbar, lambda));
  if (!(depth < -floor) || s_grid(k) == 0.0) return out;
  const double s0 = std::abs(s_grid(k));
  ContinuationConfig cfg;
  const BranchPoint p = minimize({ToyLandscape::point(wbar + s0, wbar - s0), ToyLandscape::v()}, lambda, toy.data,
                                 toy.objective(), cfg);
  if (!p.converged) return out;
  out.found = true;
  out.first = {p.W(0, 0), p.W(1, 0)};
  out.second = {p.W(1, 0), p.W(0, 0)};
  out.loss = p.loss;
  return out;
}

GridSpec auto_window(const ToyLandscape& toy, double lambda, double wbar, int n, double fallback) {
  GridSpec spec;
  spec.n = n;
  spec.c1 = spec.c2 = wbar;
  const OffDiagonalMinima mins = off_diagonal_minima(toy, lambda, wbar);
  spec.half_width = mins.found ? 1.5 * (mins.first - mins.second).norm() : fallback;
  return spec;
}

}  // namespace branchlab
