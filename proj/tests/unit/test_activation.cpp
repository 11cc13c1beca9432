#include <cmath>
#include <random>

#include "branchlab/activation.hpp"
#include "branchlab/errors.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace branchlab;

TEST_CASE("normalization at the origin") {
  CHECK(sigma_deriv(0.0, 0) == 0.0);
  CHECK(sigma_deriv(0.0, 1) == 1.0);
  CHECK(sigma_deriv(0.0, 2) == 0.0);
  CHECK(sigma_deriv(0.0, 3) == -2.0);
  CHECK(sigma_deriv(0.0, 0, ActivationKind::Identity) == 0.0);
  CHECK(sigma_deriv(0.0, 1, ActivationKind::Identity) == 1.0);
}

TEST_CASE("sigma' at 0.5 agrees with a central difference") {
  auto s = [](double z) { return sigma_deriv(z, 0); };
  CHECK(std::abs(sigma_deriv(0.5, 1) - oracle::central_diff(s, 0.5, 1e-5)) <= 1e-8);
}

TEST_CASE("unsupported derivative orders throw") {
  CHECK_THROWS_AS(sigma_deriv(0.1, 5), Error);
  CHECK_THROWS_AS(sigma_deriv(0.1, -1), Error);
  try {
    sigma_deriv(0.1, 7);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedOrder);
  }
}

TEST_CASE("homotopy endpoints are exact") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double z = nd(rng);
    CHECK(h_deriv(z, 0.0, 0) == z);
    CHECK(h_deriv(z, 1.0, 0) == std::tanh(z));
    CHECK(h_jet(z, 0.0).d[0] == z);
    CHECK(h_jet(z, 1.0).d[0] == std::tanh(z));
  }
  CHECK(h_deriv(0.0, 0.7, 2) == 0.0);
}

TEST_CASE("first and higher derivatives of h") {
  const double z = 0.37, lambda = 0.4;
  CHECK(h_deriv(z, lambda, 1) == doctest::Approx((1 - lambda) + lambda * sigma_deriv(z, 1)).epsilon(1e-15));
  for (int k = 2; k <= 4; ++k) CHECK(h_deriv(z, lambda, k) == doctest::Approx(lambda * sigma_deriv(z, k)).epsilon(1e-15));
}

TEST_CASE("each derivative matches FD of the previous order") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> zd(-3.0, 3.0), ld(0.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const double z = zd(rng), lambda = ld(rng);
    for (int k = 1; k <= 4; ++k) {
      auto prev = [&](double u) { return h_deriv(u, lambda, k - 1); };
      const double fd = oracle::central_diff(prev, z, 1e-5);
      const double exact = h_deriv(z, lambda, k);
      const double scale = std::max(std::abs(exact), 1e-3);
      CHECK(std::abs(fd - exact) / scale <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked == 400);
}

TEST_CASE("tanh derivative parity") {
  for (double z : {0.1, 0.8, 2.5, 7.0}) {
    for (int k = 0; k <= 4; ++k) {
      const double sign = (k % 2 == 0) ? -1.0 : 1.0;  // (-1)^(k+1)
      CHECK(sigma_deriv(-z, k) == doctest::Approx(sign * sigma_deriv(z, k)).epsilon(1e-15));
    }
  }
}

TEST_CASE("saturated inputs stay finite") {
  for (int k = 0; k <= 4; ++k) {
    CHECK(std::isfinite(sigma_deriv(40.0, k)));
    CHECK(std::isfinite(sigma_deriv(-400.0, k)));
  }
  CHECK(sigma_deriv(40.0, 1) == 0.0);
}

TEST_CASE("lambda outside the unit interval is rejected") {
  CHECK_THROWS_AS(h_deriv(0.1, -0.01, 0), Error);
  CHECK_THROWS_AS(h_deriv(0.1, 1.01, 1), Error);
}

TEST_CASE("activation names") {
  CHECK(parse_activation("tanh") == ActivationKind::Tanh);
  CHECK(parse_activation("identity") == ActivationKind::Identity);
  CHECK(to_string(ActivationKind::Tanh) == "tanh");
  CHECK_THROWS_AS(parse_activation("relu"), Error);
}
