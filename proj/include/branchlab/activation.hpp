#pragma once

#include <string_view>

namespace branchlab {

enum class ActivationKind { Tanh, Identity };

ActivationKind parse_activation(std::string_view name);
std::string_view to_string(ActivationKind kind);

/// Highest z-derivative order available in closed form.
inline constexpr int kMaxDerivativeOrder = 4;

/// k-th derivative of the activation sigma at z, k in [0, 4].
/// tanh derivatives are evaluated as polynomials in t = tanh(z), so they stay
/// exact for large |z| where t saturates.
double sigma_deriv(double z, int k, ActivationKind kind = ActivationKind::Tanh);

/// k-th z-derivative of h(z, lambda) = (1 - lambda) z + lambda sigma(z).
/// lambda must lie in [0, 1].
double h_deriv(double z, double lambda, int k, ActivationKind kind = ActivationKind::Tanh);

/// All derivatives of h of order 0..4 at once; shares one tanh evaluation.
struct HomotopyJet {
  double d[kMaxDerivativeOrder + 1];
};
HomotopyJet h_jet(double z, double lambda, ActivationKind kind = ActivationKind::Tanh);

void check_lambda(double lambda);

}  // namespace branchlab
