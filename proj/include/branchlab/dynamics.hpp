#pragma once

#include <filesystem>
#include <vector>

namespace branchlab {

/// phi(a) = c2 a^2 + c3 a^3 + c4 a^4.
struct FlowPotential {
  double c2 = 0.0, c3 = 0.0, c4 = 0.0;

  double phi(double a) const { return a * a * (c2 + a * (c3 + a * c4)); }
  double grad(double a) const { return a * (2.0 * c2 + a * (3.0 * c3 + 4.0 * c4 * a)); }
  /// Unfolding by the parameter: phi_aa(0) shifts by g_amu * mu.
  FlowPotential shifted(double g_amu, double mu) const { return {c2 + 0.5 * g_amu * mu, c3, c4}; }
};

struct FlowOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-14;
  double t_first = 1e-3;     // first log-spaced output time after t = 0
  int outputs = 241;         // output times including t = 0
  double blowup = 1e6;
};

struct FlowTrajectory {
  std::vector<double> t;
  std::vector<double> a;
  std::vector<double> phi;
  bool diverged = false;
  std::size_t steps = 0;  // accepted steps

  /// phi(a(t_i)) non-increasing up to a relative slack.
  bool dissipative(double slack = 1e-12) const;
};

/// da/dt = -phi'(a) with adaptive Dormand-Prince 5(4) steps.
FlowTrajectory gradient_flow(const FlowPotential& pot, double a0, double T, const FlowOptions& opts = {});

/// a(t) = (a0^-2 + 8 C t)^(-1/2) for phi = C a^4.
double quartic_closed_form(double C, double a0, double t);

struct DecayFit {
  double exponent = 0.0;
  bool algebraic = true;  // local slopes over the two tail decades agree within 20%
  double early_slope = 0.0, late_slope = 0.0;
};

/// Log-log slope of |a| over the last `decades` decades of t. Throws Estimation when the
/// trajectory covers fewer decades or has not decayed.
DecayFit decay_exponent(const std::vector<double>& t, const std::vector<double>& a, double decades = 2.0);
DecayFit decay_exponent(const FlowTrajectory& traj, double decades = 2.0);

/// t, a, phi
void write_trajectory_csv(const FlowTrajectory& traj, const std::filesystem::path& path);

}  // namespace branchlab
