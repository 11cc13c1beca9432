#pragma once

#include <functional>
#include <string>

#include "branchlab/numerics.hpp"

namespace branchlab {

/// f(x) with its gradient written into g.
using ValueGrad = std::function<double(const VectorXd& x, VectorXd& g)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 2000;
  double grad_tol = 1e-10;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
  int max_line_search = 40;
};

struct LbfgsResult {
  VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing + cubic zoom).
/// Near convergence, where loss differences sink below roundoff, steps satisfying
/// the approximate Wolfe conditions of Hager and Zhang are accepted instead.
/// Throws Numerical when f or g turns non-finite.
LbfgsResult lbfgs_minimize(const ValueGrad& fun, const VectorXd& x0, const LbfgsOptions& opts = {});

}  // namespace branchlab
