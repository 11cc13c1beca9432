#include <cmath>
#include <random>

#include "branchlab/errors.hpp"
#include "branchlab/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace branchlab;

namespace {

ModelParams random_params(std::mt19937_64& rng, Eigen::Index m, Eigen::Index d) {
  return {oracle::random_matrix(rng, m, d, 0.7), oracle::random_matrix(rng, m, 1).col(0)};
}

}  // namespace

TEST_CASE("forward at the linear endpoint is v^T W x") {
  std::mt19937_64 rng(1);
  const ModelParams th = random_params(rng, 4, 3);
  const VectorXd x = oracle::random_matrix(rng, 3, 1).col(0);
  CHECK(forward(th, x, 0.0) == doctest::Approx(th.v.dot(th.W * x)).epsilon(1e-14));
}

TEST_CASE("zero weights give zero output") {
  ModelParams th{MatrixXd::Zero(3, 2), VectorXd::Ones(3)};
  CHECK(forward(th, VectorXd::Ones(2), 0.6) == 0.0);
}

TEST_CASE("symmetric toy evaluation") {
  ModelParams th{MatrixXd::Constant(2, 1, 0.8), VectorXd::Ones(2)};
  VectorXd x(1);
  x << 1.3;
  CHECK(forward(th, x, 1.0) == doctest::Approx(2.0 * std::tanh(0.8 * 1.3)).epsilon(1e-15));
}

TEST_CASE("shape errors") {
  ModelParams th{MatrixXd::Zero(3, 2), VectorXd::Ones(2)};
  CHECK_THROWS_AS(forward(th, VectorXd::Ones(2), 0.5), Error);
  ModelParams ok{MatrixXd::Zero(3, 2), VectorXd::Ones(3)};
  CHECK_THROWS_AS(forward(ok, VectorXd::Ones(4), 0.5), Error);
  CHECK_THROWS_AS(KernelDirection(MatrixXd::Zero(2, 2)), Error);
}

TEST_CASE("kernel directions are unit") {
  std::mt19937_64 rng(2);
  KernelDirection v0(oracle::random_matrix(rng, 5, 3));
  CHECK(std::abs(v0.blocks().norm() - 1.0) <= 1e-12);
  CHECK((v0.negated().blocks() + v0.blocks()).norm() == 0.0);
}

TEST_CASE("second and higher directional derivatives vanish at lambda = 0") {
  std::mt19937_64 rng(4);
  const ModelParams th = random_params(rng, 4, 3);
  KernelDirection v0(oracle::random_matrix(rng, 4, 3));
  const VectorXd x = oracle::random_matrix(rng, 3, 1).col(0);
  const DirectionalDerivs D = directional_derivs(th, 0.0, v0, x, 4);
  CHECK(D[1] == 0.0);
  CHECK(D[2] == 0.0);
  CHECK(D[3] == 0.0);
  CHECK(D[0] == doctest::Approx(th.v.dot(v0.blocks() * x)).epsilon(1e-14));
}

TEST_CASE("directional derivatives match FD of the 1-D restriction") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams th = random_params(rng, 5, 3);
    KernelDirection v0(oracle::random_matrix(rng, 5, 3));
    const VectorXd x = oracle::random_matrix(rng, 3, 1).col(0);
    const double lambda = 0.1 + 0.08 * trial;
    auto f = [&](double a) { return forward({th.W + a * v0.blocks(), th.v}, x, lambda); };
    const DirectionalDerivs D = directional_derivs(th, lambda, v0, x, 4);
    CHECK(std::abs(D[0] - oracle::nth_central(f, 1, 1e-5)) <= 1e-6 * std::max(1.0, std::abs(D[0])));
    const double steps[4] = {1e-5, 1e-3, 1e-2, 2e-2};
    for (int k = 2; k <= 4; ++k) {
      const double fd = oracle::nth_central_richardson(f, k, steps[k - 1]);
      CHECK(std::abs(D[static_cast<size_t>(k - 1)] - fd) <= 1e-4 * std::max(1.0, std::abs(D[static_cast<size_t>(k - 1)])));
    }
  }
}

TEST_CASE("toy anti-diagonal second derivative") {
  ModelParams th{MatrixXd::Constant(2, 1, 0.6), VectorXd::Ones(2)};
  MatrixXd dir(2, 1);
  dir << 1.0, -1.0;
  KernelDirection v0(dir);
  VectorXd x(1);
  x << 0.9;
  const DirectionalDerivs D = directional_derivs(th, 1.0, v0, x, 2);
  // the two units contribute sigma''(0.54) * (0.9/sqrt2)^2 each, with equal sign
  const double each = sigma_deriv(0.54, 2) * 0.81 / 2.0;
  CHECK(D[1] == doctest::Approx(2.0 * each).epsilon(1e-14));
  auto f = [&](double a) { return forward({th.W + a * v0.blocks(), th.v}, x, 1.0); };
  CHECK(std::abs(D[1] - oracle::nth_central(f, 2, 1e-4)) <= 1e-6);
  CHECK(std::abs(D[0]) <= 1e-16);
}

TEST_CASE("permuting units leaves the output unchanged") {
  std::mt19937_64 rng(6);
  const ModelParams th = random_params(rng, 5, 2);
  const ModelParams perm = permute_units(th, {3, 0, 4, 1, 2});
  const VectorXd x = oracle::random_matrix(rng, 2, 1).col(0);
  CHECK(forward(perm, x, 0.7) == doctest::Approx(forward(th, x, 0.7)).epsilon(1e-14));
  CHECK_THROWS_AS(permute_units(th, {0, 1}), Error);
}

TEST_CASE("batched and per-sample paths agree") {
  std::mt19937_64 rng(7);
  const ModelParams th = random_params(rng, 6, 4);
  const MatrixXd X = oracle::random_matrix(rng, 50, 4);
  KernelDirection v0(oracle::random_matrix(rng, 6, 4));
  const VectorXd fb = forward_batch(th, X, 0.55);
  const MatrixXd Db = directional_derivs_batch(th, 0.55, v0, X, 4);
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    const VectorXd x = X.row(n).transpose();
    CHECK(std::abs(fb(n) - forward(th, x, 0.55)) <= 1e-12);
    const DirectionalDerivs D = directional_derivs(th, 0.55, v0, x, 4);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(Db(n, k) - D[static_cast<size_t>(k)]) <= 1e-12);
  }
}

TEST_CASE("graded output weights") {
  const VectorXd v = graded_output_weights(10);
  CHECK(v(0) == 0.5);
  CHECK(v(9) == doctest::Approx(1.5));
  CHECK(v(3) == doctest::Approx(0.5 + 3.0 / 9.0));
}
