#include "branchlab/activation.hpp"

#include <cmath>
#include <string>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

void check_order(int k) {
  if (k < 0 || k > kMaxDerivativeOrder) {
    throw Error(ErrorCode::UnsupportedOrder,
                "derivative order " + std::to_string(k) + " outside [0, 4]");
  }
}

// sigma^(k) for tanh written in t = tanh(z), s = 1 - t^2.
void tanh_derivs(double z, double out[kMaxDerivativeOrder + 1]) {
  const double t = std::tanh(z);
  const double t2 = t * t;
  const double s = 1.0 - t2;
  out[0] = t;
  out[1] = s;
  out[2] = -2.0 * t * s;
  out[3] = -2.0 * s * (1.0 - 3.0 * t2);
  out[4] = 8.0 * t * s * (2.0 - 3.0 * t2);
}

void identity_derivs(double z, double out[kMaxDerivativeOrder + 1]) {
  out[0] = z;
  out[1] = 1.0;
  out[2] = out[3] = out[4] = 0.0;
}

void sigma_all(double z, ActivationKind kind, double out[kMaxDerivativeOrder + 1]) {
  if (kind == ActivationKind::Tanh) {
    tanh_derivs(z, out);
  } else {
    identity_derivs(z, out);
  }
}

}  // namespace

ActivationKind parse_activation(std::string_view name) {
  if (name == "tanh") return ActivationKind::Tanh;
  if (name == "identity") return ActivationKind::Identity;
  throw Error(ErrorCode::InvalidInput, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(ActivationKind kind) {
  return kind == ActivationKind::Tanh ? "tanh" : "identity";
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::InvalidInput,
                "homotopy parameter " + std::to_string(lambda) + " outside [0, 1]");
  }
}

double sigma_deriv(double z, int k, ActivationKind kind) {
  check_order(k);
  double d[kMaxDerivativeOrder + 1];
  sigma_all(z, kind, d);
  return d[k];
}

HomotopyJet h_jet(double z, double lambda, ActivationKind kind) {
  check_lambda(lambda);
  double s[kMaxDerivativeOrder + 1];
  sigma_all(z, kind, s);
  HomotopyJet jet{};
  // At the endpoints return the exact pieces so h(z,0) == z and h(z,1) == sigma(z) bitwise.
  if (lambda == 0.0) {
    jet.d[0] = z;
    jet.d[1] = 1.0;
    return jet;
  }
  if (lambda == 1.0) {
    for (int k = 0; k <= kMaxDerivativeOrder; ++k) jet.d[k] = s[k];
    return jet;
  }
  const double mu = 1.0 - lambda;
  jet.d[0] = mu * z + lambda * s[0];
  jet.d[1] = mu + lambda * s[1];
  for (int k = 2; k <= kMaxDerivativeOrder; ++k) jet.d[k] = lambda * s[k];
  return jet;
}

double h_deriv(double z, double lambda, int k, ActivationKind kind) {
  check_order(k);
  return h_jet(z, lambda, kind).d[k];
}

}  // namespace branchlab
