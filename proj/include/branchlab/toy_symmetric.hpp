#pragma once

#include <filesystem>
#include <vector>

#include "branchlab/objective.hpp"

namespace branchlab {

/// d = 1, m = 2, v = (1, 1). Parameters are (w1, w2).
struct ToyLandscape {
  Dataset data;
  double alpha = 0.0;

  ObjectiveConfig objective() const;
  static VectorXd v() { return VectorXd::Ones(2); }
  static MatrixXd point(double w1, double w2);

  double loss(double w1, double w2, double lambda) const;
  Eigen::Vector2d grad(double w1, double w2, double lambda) const;
  Eigen::Matrix2d hessian(double w1, double w2, double lambda) const;
};

struct DiagonalPoint {
  double lambda = 0.0;
  double wbar = 0.0;
  double loss = 0.0;
  double longitudinal = 0.0;  // eigenvalue along (1, 1)
  double transverse = 0.0;    // eigenvalue along (1, -1)
  double diag_grad = 0.0;     // d/dwbar loss(wbar, wbar) after polishing
};

/// Bounded 1-D minimization of loss(w, w) on [lo, hi] for each lambda, Newton-polished.
std::vector<DiagonalPoint> diagonal_branch(const ToyLandscape& toy, const std::vector<double>& lambdas,
                                           double lo = -5.0, double hi = 5.0);
DiagonalPoint diagonal_point(const ToyLandscape& toy, double lambda, double lo = -5.0, double hi = 5.0);

/// phi(s) = loss(wbar + s, wbar - s) - loss(wbar, wbar).
VectorXd antidiagonal_potential(const ToyLandscape& toy, double lambda, double wbar, const VectorXd& s_grid);

struct GridSpec {
  double c1 = 0.0, c2 = 0.0;  // window center (w1, w2)
  double half_width = 3.0;
  int n = 401;
};

struct CriticalPoint {
  double w1, w2, loss;
  Eigen::Vector2d eigenvalues;
  enum class Kind { Minimum, Saddle, Maximum, Degenerate } kind;
};

/// Loss sampled on the grid (row index = w2, column index = w1), evaluated once
/// and queried for several levels.
class SublevelGrid {
 public:
  SublevelGrid(const ToyLandscape& toy, double lambda, const GridSpec& spec);

  struct Components {
    int count = 0;
    bool touches_boundary = false;
  };
  /// 4-neighbour connected components of {loss <= level}.
  Components components(double level) const;

  const MatrixXd& values() const { return values_; }
  const GridSpec& spec() const { return spec_; }
  double coordinate(int k) const;
  double min_value() const { return values_.minCoeff(); }

  /// Stationary points inside the window: grid minima of |grad|^2 polished by 2-D Newton,
  /// deduplicated and classified by Hessian eigenvalue signs.
  std::vector<CriticalPoint> census() const;

  void write_csv(const std::filesystem::path& path) const;

 private:
  const ToyLandscape& toy_;
  double lambda_;
  GridSpec spec_;
  MatrixXd values_;
  MatrixXd grad_sq_;
};

/// Window centred on the diagonal point with full width 3x the separation of the two
/// off-diagonal minima (found from the anti-diagonal potential); falls back to
/// half-width `fallback` when no off-diagonal minima exist.
struct OffDiagonalMinima {
  bool found = false;
  Eigen::Vector2d first, second;
  double loss = 0.0;
};

OffDiagonalMinima off_diagonal_minima(const ToyLandscape& toy, double lambda, double wbar);
GridSpec auto_window(const ToyLandscape& toy, double lambda, double wbar, int n = 401, double fallback = 3.0);

}  // namespace branchlab
