#include "branchlab/dynamics.hpp"

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "branchlab/errors.hpp"
#include "branchlab/numerics.hpp"

namespace branchlab {

namespace odeint = boost::numeric::odeint;

namespace {

struct BlowUp {};

}  // namespace

bool FlowTrajectory::dissipative(double slack) const {
  for (std::size_t i = 1; i < phi.size(); ++i) {
    if (phi[i] > phi[i - 1] + slack * std::max(1.0, std::abs(phi[i - 1]))) return false;
  }
  return true;
}

FlowTrajectory gradient_flow(const FlowPotential& pot, double a0, double T, const FlowOptions& opts) {
  if (a0 == 0.0) throw Error(ErrorCode::InvalidInput, "a0 must be nonzero");
  if (!(T > 0.0)) throw Error(ErrorCode::InvalidInput, "T must be positive");
  if (opts.outputs < 3 || !(opts.t_first > 0.0 && opts.t_first < T)) {
    throw Error(ErrorCode::InvalidInput, "need >= 3 outputs and 0 < t_first < T");
  }
  std::vector<double> times{0.0};
  const int n_log = opts.outputs - 1;
  const double l0 = std::log10(opts.t_first), l1 = std::log10(T);
  for (int k = 0; k < n_log; ++k) {
    times.push_back(k == n_log - 1 ? T : std::pow(10.0, l0 + (l1 - l0) * k / (n_log - 1)));
  }

  FlowTrajectory traj;
  using State = double;
  auto rhs = [&](const State& a, State& dadt, double) {
    // steps shrink toward a finite-time singularity, so the check cannot wait for an output time
    if (!std::isfinite(a) || std::abs(a) > opts.blowup) throw BlowUp{};
    dadt = -pot.grad(a);
  };
  auto observer = [&](const State& a, double t) {
    if (!std::isfinite(a) || std::abs(a) > opts.blowup) throw BlowUp{};
    traj.t.push_back(t);
    traj.a.push_back(a);
    traj.phi.push_back(pot.phi(a));
  };
  auto stepper = odeint::make_controlled(opts.abs_tol, opts.rel_tol, odeint::runge_kutta_dopri5<State>());
  State a = a0;
  try {
    traj.steps = odeint::integrate_times(stepper, rhs, a, times.begin(), times.end(), opts.t_first * 1e-3, observer);
  } catch (const BlowUp&) {
    traj.diverged = true;
  } catch (const std::runtime_error&) {
    // step-size underflow or step limit: finite-time blow-up in practice
    traj.diverged = true;
  }
  return traj;
}

double quartic_closed_form(double C, double a0, double t) {
  return std::copysign(1.0 / std::sqrt(1.0 / (a0 * a0) + 8.0 * C * t), a0);
}

DecayFit decay_exponent(const std::vector<double>& t, const std::vector<double>& a, double decades) {
  if (t.size() != a.size()) throw Error(ErrorCode::DimensionMismatch, "t and a differ in length");
  if (t.empty() || !(t.back() > 0.0)) throw Error(ErrorCode::Estimation, "empty trajectory");
  const double t_start = t.back() / std::pow(10.0, decades);
  // window opens at the last sample not after t_start, so it spans the full range
  std::size_t first = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= t_start * (1.0 + 1e-12)) first = i;
  }
  std::vector<double> lt, la;
  for (std::size_t i = first; i < t.size(); ++i) {
    if (t[i] > 0.0 && a[i] != 0.0) {
      lt.push_back(std::log(t[i]));
      la.push_back(std::log(std::abs(a[i])));
    }
  }
  if (lt.size() < 6 || t.front() > t_start || lt.back() - lt.front() < decades * std::log(10.0) * 0.99) {
    throw Error(ErrorCode::Estimation, "trajectory covers fewer than the requested decades");
  }
  if (!(la.back() < la.front())) throw Error(ErrorCode::Estimation, "no decay in the trajectory tail");
  auto slope = [&](std::size_t b, std::size_t e) {
    MatrixXd X(static_cast<Eigen::Index>(e - b), 2);
    VectorXd y(static_cast<Eigen::Index>(e - b));
    for (std::size_t i = b; i < e; ++i) {
      X(static_cast<Eigen::Index>(i - b), 0) = 1.0;
      X(static_cast<Eigen::Index>(i - b), 1) = lt[i];
      y(static_cast<Eigen::Index>(i - b)) = la[i];
    }
    return least_squares(X, y)(1);
  };
  DecayFit fit;
  fit.exponent = slope(0, lt.size());
  const std::size_t mid = lt.size() / 2;
  fit.early_slope = slope(0, mid + 1);
  fit.late_slope = slope(mid, lt.size());
  const double scale = std::max(std::abs(fit.early_slope), std::abs(fit.late_slope));
  fit.algebraic = std::abs(fit.late_slope - fit.early_slope) <= 0.2 * scale;
  return fit;
}

DecayFit decay_exponent(const FlowTrajectory& traj, double decades) {
  return decay_exponent(traj.t, traj.a, decades);
}

void write_trajectory_csv(const FlowTrajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string());
  out << "t,a,phi\n";
  char buf[96];
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", traj.t[i], traj.a[i], traj.phi[i]);
    out << buf;
  }
}

}  // namespace branchlab
